"""Adam descent over any estimator, and the hyperparameter sweep driver."""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import ConfigError, SmoothGradError
from .estimators import EstimatorSpec, crisp_objective


class NonFiniteGradientError(SmoothGradError, ArithmeticError):
    """A gradient handed to the optimizer contained NaN or infinity."""


class DescentAborted(SmoothGradError):
    """An estimate failed mid-descent; ``records`` holds everything logged before it."""

    def __init__(self, records, cause):
        super().__init__(f"descent aborted after {len(records)} record(s): {cause}")
        self.records = records
        self.__cause__ = cause


@dataclass
class AdamState:
    n: int
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = None
    v: np.ndarray = None
    t: int = 0

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.n)
        if self.v is None:
            self.v = np.zeros(self.n)


def adam_step(state, grad, params):
    """One bias-corrected Adam update; mutates ``state`` and returns the new params."""
    grad = np.asarray(grad, dtype=float)
    params = np.asarray(params, dtype=float)
    if grad.shape != (state.n,) or params.shape != (state.n,):
        raise ConfigError(f"expected vectors of length {state.n}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError(f"non-finite gradient entries at {np.flatnonzero(~np.isfinite(grad)).tolist()}")
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = state.m / (1 - state.beta1 ** state.t)
    v_hat = state.v / (1 - state.beta2 ** state.t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass(frozen=True)
class Budget:
    steps: Optional[int] = None
    seconds: Optional[float] = None

    def __post_init__(self):
        if self.steps is None and self.seconds is None:
            raise ConfigError("a budget needs a step count, a time limit, or both")
        if self.steps is not None and self.steps < 0:
            raise ConfigError("steps must be non-negative")
        if self.seconds is not None and self.seconds < 0:
            raise ConfigError("seconds must be non-negative")

    def exhausted(self, step, elapsed):
        return ((self.steps is not None and step >= self.steps)
                or (self.seconds is not None and elapsed >= self.seconds))


@dataclass
class DescentRecord:
    step: int
    wall_ms: float
    expectation: float
    crisp_objective: float
    params: Optional[np.ndarray] = field(default=None, repr=False)

    CSV_FIELDS = ("step", "wall_ms", "expectation", "crisp_objective")

    def row(self):
        return (self.step, self.wall_ms, self.expectation, self.crisp_objective)


def step_seed(seed, *path):
    """Independent 32-bit seed for position ``path`` under ``seed``."""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def descend(problem, estimator, lr, budget, seed=0, *, microreps=1, timing=True,
            keep_params=False, x0=None):
    """Minimise ``problem`` with Adam on ``estimator``'s gradients.

    Record ``k`` describes the parameters after ``k`` updates: the estimator's
    expectation there and the crisp objective (in the problem's own sense,
    i.e. re-negated for maximisation problems).  A budget of ``N`` steps gives
    ``N + 1`` records.  Stochastic problems draw fresh program randomness per
    step and average the gradient over ``microreps`` runs; deterministic ones
    reuse their evaluation seed.
    """
    if microreps < 1:
        raise ConfigError("microreps must be at least 1")
    x = problem.clamp(np.asarray(problem.initial(seed) if x0 is None else x0, dtype=float))
    state = AdamState(problem.n, lr=lr)
    records = []
    t0 = time.perf_counter()
    step = 0
    while True:
        try:
            ests = []
            for r in range(microreps):
                s = step_seed(seed, step, r)
                pseed = s if problem.stochastic else problem.eval_seeds[0]
                ests.append(estimator.estimate(problem, x, seed=s, program_seed=pseed))
            grad = np.mean([e.gradient for e in ests], axis=0)
            expect = float(np.mean([e.expectation for e in ests]))
            crisp = problem.report(crisp_objective(problem, x))
        except SmoothGradError as e:
            raise DescentAborted(records, e) from e
        elapsed = time.perf_counter() - t0
        records.append(DescentRecord(step, elapsed * 1000.0 if timing else 0.0,
                                     problem.report(expect), crisp,
                                     x.copy() if keep_params else None))
        if budget.exhausted(step, elapsed):
            return records
        try:
            x = problem.clamp(adam_step(state, grad, x))
        except NonFiniteGradientError as e:
            raise DescentAborted(records, e) from e
        step += 1


# -- sweeps ---------------------------------------------------------------------

@dataclass(frozen=True)
class SweepCell:
    sigma: float
    lr: float
    estimator: EstimatorSpec


def sweep_grid(estimator, sigma0, lr0, factors=(0.5, 1.0, 2.0), sizes=None, strategies=None):
    """Full cross product of ``sigma0 * factors`` x ``lr0 * factors`` (x sizes x strategies)."""
    specs = [estimator]
    if sizes:
        field_name = "paths" if estimator.kind == "dgsi" else "samples"
        specs = [replace(sp, **{field_name: z}) for sp in specs for z in sizes]
    if strategies:
        specs = [replace(sp, strategy=st) for sp in specs for st in strategies]
    return [SweepCell(sigma0 * fs, lr0 * fl, sp.with_sigma(sigma0 * fs))
            for sp in specs for fs in factors for fl in factors]


def _final(task):
    problem, cell, budget, seed, microreps = task
    recs = descend(problem, cell.estimator, cell.lr, budget, seed,
                   microreps=microreps, timing=False)
    return recs[-1].crisp_objective


def default_jobs():
    try:
        return max(1, int(os.environ.get("SMOOTHGRAD_JOBS", "1")))
    except ValueError:
        raise ConfigError("SMOOTHGRAD_JOBS must be an integer") from None


@dataclass
class SweepRow:
    label: str
    sigma: float
    lr: float
    mean_final: float
    finals: List[float]

    CSV_FIELDS = ("estimator", "sigma", "lr", "mean_final", "finals")

    def row(self):
        return (self.label, self.sigma, self.lr, self.mean_final,
                " ".join(repr(f) for f in self.finals))


def sweep(problem, cells, macroreps, budget, seed=0, *, microreps=1, jobs=None):
    """Run ``macroreps`` descents per cell; macroreplication ``r`` starts from the
    same solution (seed ``seed + r``) in every cell.  Returns the rows and the
    index of the best cell by mean final crisp objective."""
    if not cells:
        raise ConfigError("sweep grid is empty")
    if macroreps < 1:
        raise ConfigError("macroreps must be at least 1")
    tasks = [(problem, c, budget, seed + r, microreps) for c in cells for r in range(macroreps)]
    jobs = default_jobs() if jobs is None else jobs
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            finals = list(pool.map(_final, tasks))
    else:
        finals = [_final(t) for t in tasks]
    rows = []
    for i, c in enumerate(cells):
        fs = finals[i * macroreps:(i + 1) * macroreps]
        rows.append(SweepRow(c.estimator.label, c.sigma, c.lr, float(np.mean(fs)), fs))
    pick = max if problem.sense == "max" else min
    best = pick(range(len(rows)), key=lambda i: (rows[i].mean_final, -i) if pick is max
                else (rows[i].mean_final, i))
    return rows, best
