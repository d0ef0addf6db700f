"""Crisp evaluation and the sampling baselines: IPA, PGO and REINFORCE."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .api import GradResult, make_rng, program_dim, run_ad, run_crisp
from .batch import BatchContext, lane_gradients, lane_values
from .errors import ConfigError, SampleError, SmoothGradError

KINDS = ("crisp", "ipa", "pgo", "rf")


@dataclass
class EstimatorConfig:
    kind: str = "pgo"
    samples: int = 100
    sigma: float = 0.1
    seed: int = 0
    program_seed: Optional[int] = None
    batched: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown estimator kind {self.kind!r}")
        if self.samples < 1:
            raise ConfigError("samples must be at least 1")
        sig = np.asarray(self.sigma, dtype=float)
        if self.kind in ("pgo", "rf"):
            if sig.ndim != 0:
                raise ConfigError("PGO and REINFORCE take a scalar sigma")
            if not sig > 0:
                raise ConfigError("PGO and REINFORCE need sigma > 0")
        elif np.any(sig < 0):
            raise ConfigError("sigma must be non-negative")

    @property
    def prog_seed(self):
        return self.seed if self.program_seed is None else self.program_seed


def perturbations(n, cfg):
    """Standard normal directions ``u_s``; identical for every estimator sharing a seed."""
    return np.random.default_rng(cfg.seed).standard_normal((cfg.samples, n))


def crisp_run(program, x, seed=0):
    """One unperturbed execution on plain floats."""
    return run_crisp(program, x, seed)


def _run_batch(program, X, seed, tangents):
    S, n = X.shape
    ctx = BatchContext(n, S, tangents=tangents)
    try:
        with np.errstate(all="ignore"):
            y = program(ctx, ctx.inputs(X), make_rng(seed))
    except (SmoothGradError, ArithmeticError) as e:
        raise SampleError(getattr(e, "lanes", None) or range(S), e) from e
    return y


def crisp_batch(program, X, seed=0):
    """Crisp outputs of ``program`` at each row of ``X`` (one lane per row)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = _run_batch(program, X, seed, tangents=False)
    return lane_values(y, X.shape[0])


def ipa_estimate(program, x, cfg):
    """Average of pathwise AD gradients over perturbed runs."""
    n = program_dim(program)
    x = np.asarray(x, dtype=float)
    sig = np.broadcast_to(np.asarray(cfg.sigma, dtype=float), (n,))
    X = x + sig * perturbations(n, cfg)
    S = cfg.samples
    if cfg.batched:
        y = _run_batch(program, X, cfg.prog_seed, tangents=True)
        yv = lane_values(y, S)
        G = lane_gradients(y, S, n)
    else:
        yv = np.empty(S)
        G = np.empty((S, n))
        for s in range(S):
            yv[s], G[s], _ = run_ad(program, X[s], cfg.prog_seed)
    se = G.std(axis=0, ddof=1) / math.sqrt(S) if S > 1 else np.zeros(n)
    return GradResult(float(yv.mean()), G.mean(axis=0), se, info={"pathwise": G})


def _perturbed_outputs(program, x, cfg):
    n = program_dim(program)
    x = np.asarray(x, dtype=float)
    U = perturbations(n, cfg)
    X = x + cfg.sigma * U
    if cfg.batched:
        vals = crisp_batch(program, np.vstack([x[None, :], X]), cfg.prog_seed)
        base, ys = float(vals[0]), vals[1:]
    else:
        base = crisp_run(program, x, cfg.prog_seed)
        ys = np.array([crisp_run(program, X[s], cfg.prog_seed) for s in range(cfg.samples)])
    return base, ys, U


def _finish(ys, contrib, base, U):
    S = ys.size
    se = contrib.std(axis=0, ddof=1) / math.sqrt(S) if S > 1 else np.zeros(contrib.shape[1])
    return GradResult(float(ys.mean()), contrib.mean(axis=0), se,
                      info={"base": base, "u_mean": U.mean(axis=0)})


def pgo_estimate(program, x, cfg):
    """Gaussian-smoothing finite differences: mean of ``(P(x+su)-P(x))/s * u``."""
    base, ys, U = _perturbed_outputs(program, x, cfg)
    contrib = ((ys - base) / cfg.sigma)[:, None] * U
    return _finish(ys, contrib, base, U)


def rf_estimate(program, x, cfg):
    """Score-function estimator: mean of ``P(x+su)/s * u``."""
    base, ys, U = _perturbed_outputs(program, x, cfg)
    contrib = (ys / cfg.sigma)[:, None] * U
    return _finish(ys, contrib, base, U)
