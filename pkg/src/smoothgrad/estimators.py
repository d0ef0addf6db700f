"""One front door for every gradient estimator."""

import math
from dataclasses import dataclass, replace

import numpy as np

from .api import GradResult, program_dim, run_ad, run_crisp
from .baselines import EstimatorConfig, ipa_estimate, pgo_estimate, rf_estimate
from .dgo import DgoConfig, dgo_estimate
from .errors import ConfigError
from .si import STRATEGIES, RestrictConfig, si_execute

ESTIMATORS = ("crisp", "ipa", "dgsi", "dgo", "pgo", "rf")


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to run and with what settings.

    ``samples`` applies to the sampling estimators, ``paths``/``strategy``/
    ``threshold`` to DGSI and ``delta`` to DGO; setting a field that the
    chosen estimator does not use is an error.
    """

    kind: str = "dgo"
    sigma: float = 0.1
    samples: int = None
    paths: int = None
    strategy: str = None
    threshold: float = None
    delta: float = None

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.kind!r}; pick one of {', '.join(ESTIMATORS)}")
        sampling = self.kind in ("ipa", "dgo", "pgo", "rf")
        if self.samples is not None and not sampling:
            raise ConfigError(f"--samples does not apply to {self.kind}")
        for name in ("paths", "strategy", "threshold"):
            if getattr(self, name) is not None and self.kind != "dgsi":
                raise ConfigError(f"--{name} only applies to dgsi")
        if self.delta is not None and self.kind != "dgo":
            raise ConfigError("--delta only applies to dgo")
        if self.strategy is not None and self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown restrict strategy {self.strategy!r}")
        if sampling:
            min_s = 2 if self.kind == "dgo" else 1
            if self.n_samples < min_s:
                raise ConfigError(f"{self.kind} needs at least {min_s} samples")
        if self.kind != "crisp" and not self.sigma >= 0:
            raise ConfigError("sigma must be non-negative")
        if self.kind in ("pgo", "rf") and not self.sigma > 0:
            raise ConfigError(f"{self.kind} needs sigma > 0")
        self.restrict_config()

    @property
    def n_samples(self):
        return 100 if self.samples is None else self.samples

    def restrict_config(self):
        if self.kind != "dgsi":
            return None
        return RestrictConfig(
            max_paths=16 if self.paths is None else self.paths,
            strategy=self.strategy or "ch",
            weight_threshold=1e-20 if self.threshold is None else self.threshold,
        )

    @property
    def size(self):
        """Samples or tracked paths: the unit the per-unit cost is normalised by."""
        if self.kind == "dgsi":
            return self.restrict_config().max_paths
        if self.kind == "crisp":
            return 1
        return self.n_samples

    @property
    def label(self):
        if self.kind == "dgsi":
            r = self.restrict_config()
            return f"DGSI/{r.strategy.capitalize()}/{r.max_paths}"
        if self.kind == "crisp":
            return "Crisp"
        return f"{self.kind.upper()}/{self.n_samples}"

    def with_sigma(self, sigma):
        return replace(self, sigma=sigma)

    def estimate(self, program, x, seed=0, program_seed=None):
        """Run the estimator; ``seed`` drives perturbations, ``program_seed`` the program's rng."""
        x = np.asarray(x, dtype=float)
        pseed = seed if program_seed is None else program_seed
        k = self.kind
        if k == "crisp":
            y, g, _ = run_ad(program, x, pseed)
            return GradResult(y, g, np.zeros(program_dim(program)))
        if k == "dgsi":
            return si_execute(program, x, self.sigma, self.restrict_config(), seed=pseed)
        if k == "dgo":
            cfg = DgoConfig(samples=self.n_samples, sigma=self.sigma,
                            delta=math.inf if self.delta is None else self.delta,
                            seed=seed, program_seed=pseed)
            return dgo_estimate(program, x, cfg)
        cfg = EstimatorConfig(kind=k, samples=self.n_samples, sigma=self.sigma,
                              seed=seed, program_seed=pseed)
        return {"ipa": ipa_estimate, "pgo": pgo_estimate, "rf": rf_estimate}[k](program, x, cfg)


def crisp_objective(problem, x, seeds=None):
    """Mean crisp output over ``seeds`` (default: the problem's evaluation seeds)."""
    seeds = getattr(problem, "eval_seeds", (0,)) if seeds is None else seeds
    x = [float(v) for v in x]
    return float(np.mean([run_crisp(problem, x, s) for s in seeds]))
