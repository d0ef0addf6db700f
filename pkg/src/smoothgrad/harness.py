"""Fidelity and cost measurements, and CSV output."""

import csv
import sys
import time
from dataclasses import dataclass
from typing import List

import numpy as np

from .api import run_crisp
from .errors import ConfigError
from .estimators import EstimatorSpec

MAX_FIDELITY_DIMS = 25


def format_value(v):
    """Locale-independent text for a CSV cell; floats round-trip exactly."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(records, path, fields=None):
    """Header row then one row per record (``record.row()`` or a plain sequence).

    ``path`` may be a filename or an open text stream; ``fields`` defaults to
    the records' ``CSV_FIELDS`` and is required for an empty list.
    """
    records = list(records)
    if fields is None:
        if not records:
            raise ConfigError("fields are required to write an empty table")
        fields = records[0].CSV_FIELDS
    own = isinstance(path, (str, bytes)) or hasattr(path, "__fspath__")
    f = open(path, "w", newline="") if own else path
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(fields)
        for r in records:
            row = r.row() if hasattr(r, "row") else r
            w.writerow([format_value(v) for v in row])
    finally:
        if own:
            f.close()


# -- fidelity ---------------------------------------------------------------------

@dataclass
class FidelityRow:
    dim: int
    mae: float
    baseline_se: float

    CSV_FIELDS = ("dim", "mae", "baseline_se")

    def row(self):
        return (self.dim, self.mae, self.baseline_se)


@dataclass
class FidelityReport:
    rows: List[FidelityRow]
    grid: np.ndarray
    point: np.ndarray

    @property
    def mean_mae(self):
        return float(np.mean([r.mae for r in self.rows]))


def independent_seed(seed):
    """A seed whose stream does not overlap the one drawn from ``seed``."""
    return int(np.random.SeedSequence([seed, 0x62617365]).generate_state(1)[0])


def grid_offsets(count, half_width):
    """``count`` evenly spaced offsets covering ``[-half_width, half_width]``."""
    if count < 1:
        raise ConfigError("grid needs at least one point")
    if count == 1:
        return np.zeros(1)
    return np.linspace(-half_width, half_width, count)


def fidelity_mae(problem, estimator, baseline, dims=None, count=10, half_width=None,
                 point=None, seed=0, baseline_seed=None):
    """Per-dimension mean absolute gradient error against ``baseline``.

    For each of the first ``dims`` input dimensions ``d`` the inputs are moved
    along ``d`` over an even grid around ``point`` and the ``d``-th partial of
    both estimators is compared at every grid point.  The baseline draws its
    perturbations from ``baseline_seed``, by default a stream independent of
    ``seed`` so that a sampling estimator does not reuse the baseline's own
    draws; pass ``baseline_seed=seed`` to compare on common random numbers.
    """
    if isinstance(baseline, EstimatorSpec) and isinstance(estimator, EstimatorSpec):
        if baseline.kind != "pgo":
            raise ConfigError("the fidelity baseline must be PGO")
        if estimator.kind != "dgsi" and baseline.n_samples < estimator.n_samples:
            raise ConfigError("the baseline needs at least as many samples as the estimator")
    n = problem.n
    dims = min(n, MAX_FIDELITY_DIMS) if dims is None else dims
    if not 1 <= dims <= min(n, MAX_FIDELITY_DIMS):
        raise ConfigError(f"dims must lie in 1..{min(n, MAX_FIDELITY_DIMS)} for {problem.name}")
    half = problem.fidelity_range if half_width is None else half_width
    point = problem.initial(seed) if point is None else np.broadcast_to(
        np.asarray(point, dtype=float), (n,)).copy()
    offsets = grid_offsets(count, half)
    pseed = problem.eval_seeds[0]
    bseed = independent_seed(seed) if baseline_seed is None else baseline_seed
    rows = []
    for d in range(dims):
        errs, ses = [], []
        for off in offsets:
            x = point.copy()
            x[d] += off
            x = problem.clamp(x)
            e = estimator.estimate(problem, x, seed=seed, program_seed=pseed)
            b = baseline.estimate(problem, x, seed=bseed, program_seed=pseed)
            errs.append(abs(e.gradient[d] - b.gradient[d]))
            ses.append(0.0 if b.stderr is None else b.stderr[d])
        rows.append(FidelityRow(d, float(np.mean(errs)), float(np.mean(ses))))
    return FidelityReport(rows, offsets, point)


# -- cost -------------------------------------------------------------------------

@dataclass
class BenchRow:
    estimator: str
    samples_or_paths: float
    mean_ms: float
    slowdown_per_unit: float

    CSV_FIELDS = ("estimator", "samples_or_paths", "mean_ms", "slowdown_per_unit")

    def row(self):
        return (self.estimator, self.samples_or_paths, self.mean_ms, self.slowdown_per_unit)


def _timed(fn, repeats):
    times = []
    out = None
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return float(np.mean(times)) * 1000.0, out


def bench(problem, estimator, repeats=3, seed=0, point=None, crisp_repeats=None):
    """Mean wall time of one estimate and its slowdown over a crisp run per unit.

    The unit is a sample for the sampling estimators and a tracked path for
    DGSI, where the mean number of live paths per branch is used.
    """
    if repeats < 1:
        raise ConfigError("repeats must be at least 1")
    x = problem.initial(seed) if point is None else np.asarray(point, dtype=float)
    pseed = problem.eval_seeds[0]
    xs = [float(v) for v in x]
    crisp_ms, _ = _timed(lambda: run_crisp(problem, xs, pseed), crisp_repeats or max(repeats, 5))
    est_ms, res = _timed(lambda: estimator.estimate(problem, x, seed=seed, program_seed=pseed),
                         repeats)
    units = estimator.size
    if estimator.kind == "dgsi":
        units = max(res.info.get("effective_paths", units), 1.0)
    slowdown = est_ms / crisp_ms / units if crisp_ms > 0 else float("inf")
    return BenchRow(estimator.label, units, est_ms, slowdown)


def stdout_or(path):
    return sys.stdout if path in (None, "-") else path
