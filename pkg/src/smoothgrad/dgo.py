"""Monte Carlo gradient oracle: pathwise AD plus KDE-estimated branch-weight derivatives.

Each sample ``x_s ~ N(x, diag(sigma^2))`` is executed with forward-mode AD
while every branch encounter is logged with its condition margin ``g`` (the
branch is taken iff ``g <= 0``) and the margin's tangent.  Per dynamic branch
the derivative of the probability of taking it is

    D = -(f(0) / S) * sum_s dg_s/dx * 1{|g_s| < delta}

where ``f`` is a Gaussian KDE of the branch's margins.  Each sample then
borrows, per input dimension, the derivative of one branch it passed (the
one whose samples straddle zero most evenly), weighted by its output.

Two executors produce the same numbers: a lane-vectorised one (default) and
a literal one-sample-at-a-time reference.
"""

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .api import GradResult, make_rng, program_dim, run_ad
from .batch import DENSE, ZERO, BatchContext, BatchRecorder, lane_gradients, lane_values
from .errors import ConfigError, SampleError, SmoothGradError
from .gauss import BANDWIDTH_FLOOR, INV_SQRT_2PI

NORMALIZATIONS = ("side", "path")


@dataclass
class DgoConfig:
    """Settings of one DGO estimate.

    Args:
        samples: Number of Monte Carlo samples (at least 2).
        sigma: Smoothing scale, scalar or one entry per input.
        delta: Half-width of the window of margins that count; ``inf`` keeps all.
        bandwidth: ``"silverman"`` or a fixed positive kernel bandwidth.
        seed: Seed of the input perturbations.
        program_seed: Seed of the program's own randomness, shared by every
            sample of one estimate; defaults to ``seed``.
        normalization: Divide a sample's borrowed derivative by the number of
            samples on the same side of that branch (``"side"``) or on the
            same full path (``"path"``).
        batched: Use the lane-vectorised executor.
    """

    samples: int = 100
    sigma: Union[float, np.ndarray] = 0.1
    delta: float = math.inf
    bandwidth: Union[str, float] = "silverman"
    seed: int = 0
    program_seed: Optional[int] = None
    normalization: str = "side"
    batched: bool = True

    def __post_init__(self):
        if self.samples < 2:
            raise ConfigError("DGO needs at least 2 samples")
        if np.any(np.asarray(self.sigma) < 0):
            raise ConfigError("sigma must be non-negative")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "silverman":
                raise ConfigError(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise ConfigError("bandwidth must be positive")

    @property
    def prog_seed(self):
        return self.seed if self.program_seed is None else self.program_seed


@dataclass
class BranchRecord:
    branch_id: tuple
    sample_id: int
    g_value: float
    g_tangent: np.ndarray
    taken: bool


@dataclass
class SampleRun:
    sample_id: int
    x: np.ndarray
    y: float
    pathwise_grad: np.ndarray
    signature: tuple = field(default_factory=tuple)


def perturbations(n, cfg):
    """The ``(S, n)`` standard normal draws behind ``cfg``'s samples."""
    return np.random.default_rng(cfg.seed).standard_normal((cfg.samples, n))


def sample_points(x, cfg):
    x = np.asarray(x, dtype=float)
    sig = np.broadcast_to(np.asarray(cfg.sigma, dtype=float), x.shape)
    return x + sig * perturbations(x.size, cfg)


# -- per-branch statistics ----------------------------------------------------

def _bandwidth(g, rule):
    if not isinstance(rule, str):
        return float(rule)
    m = g.size
    if m < 2:
        return BANDWIDTH_FLOOR
    return max(1.06 * float(g.std(ddof=1)) * m ** -0.2, BANDWIDTH_FLOOR)


def _density_at_zero(g, h):
    z = g / h
    return float(np.exp(-0.5 * z * z).sum()) * INV_SQRT_2PI / (g.size * h)


def branch_stats(g, delta, rule):
    """KDE density of the margins at 0, window mask and balance score.

    Returns ``(f0, window, score)`` with ``f0`` None when the branch is
    starved (fewer than two margins in the window) or degenerate (all margins
    equal, e.g. when ``sigma = 0``).
    """
    if math.isinf(delta):
        window = None
        n_in = g.size
        n_le = int(np.count_nonzero(g <= 0))
        n_gt = n_in - n_le
    else:
        window = np.abs(g) < delta
        n_in = int(np.count_nonzero(window))
        n_le = int(np.count_nonzero((g >= -delta) & (g <= 0)))
        n_gt = int(np.count_nonzero((g > 0) & (g <= delta)))
    tot = n_le + n_gt
    score = abs(n_le - n_gt) / tot if tot else 1.0
    if n_in < 2 or g.size < 2 or g.max() == g.min():
        return None, window, score
    return _density_at_zero(g, _bandwidth(g, rule)), window, score


def weight_derivative(records, n, samples, delta=math.inf, bandwidth="silverman"):
    """Derivative of the probability of the ``taken`` side of one branch.

    ``records`` are the :class:`BranchRecord` entries of one dynamic branch;
    ``samples`` is the total sample count S.  The other side's derivative is
    the negation.
    """
    if len(records) < 2:
        return np.zeros(n)
    g = np.array([r.g_value for r in records], dtype=float)
    f0, window, _ = branch_stats(g, delta, bandwidth)
    if f0 is None:
        return np.zeros(n)
    T = np.array([r.g_tangent for r in records], dtype=float).reshape(len(records), n)
    if window is not None:
        T = T[window]
    return -f0 / samples * T.sum(axis=0)


# -- vectorised aggregation ----------------------------------------------------

@dataclass
class BranchGroup:
    key: tuple
    seq: int
    lanes: np.ndarray
    g: np.ndarray
    ti: int
    tdata: Optional[np.ndarray]
    taken: np.ndarray


def _merge_chunks(key, chunks, n):
    seq = chunks[0][5]
    if len(chunks) == 1:
        lanes, g, ti, td, taken, _ = chunks[0]
        return BranchGroup(key, seq, lanes, g, ti, td, taken)
    lanes = np.concatenate([c[0] for c in chunks])
    g = np.concatenate([c[1] for c in chunks])
    taken = np.concatenate([c[4] for c in chunks])
    kinds = {c[2] for c in chunks}
    if kinds == {ZERO}:
        return BranchGroup(key, seq, lanes, g, ZERO, None, taken)
    if len(kinds) == 1 and next(iter(kinds)) >= 0:
        return BranchGroup(key, seq, lanes, g, next(iter(kinds)),
                           np.concatenate([c[3] for c in chunks]), taken)
    blocks = []
    for lanes_c, _, ti, td, _, _ in chunks:
        B = np.zeros((lanes_c.size, n))
        if ti >= 0:
            B[:, ti] = td
        elif ti == DENSE:
            B[:] = td
        blocks.append(B)
    return BranchGroup(key, seq, lanes, g, DENSE, np.concatenate(blocks), taken)


def groups_from_recorder(rec):
    return [_merge_chunks(k, chunks, rec.n) for k, chunks in rec.entries.items()]


class _Assigner:
    """Per-sample, per-dimension choice of the branch whose derivative is borrowed."""

    def __init__(self, S, n):
        self.best = np.full((S, n), np.inf)
        self.best_seq = np.full((S, n), np.iinfo(np.int64).max, dtype=np.int64)
        self.value = np.zeros((S, n))

    def offer(self, lanes, cols, score, seq, vals):
        """``vals``: ``(len(lanes), len(cols))`` candidate values."""
        ix = np.ix_(lanes, cols)
        b = self.best[ix]
        bs = self.best_seq[ix]
        upd = (score < b) | ((score == b) & (seq < bs))
        if not upd.any():
            return
        b[upd] = score
        bs[upd] = seq
        v = self.value[ix]
        v[upd] = vals[upd]
        self.best[ix] = b
        self.best_seq[ix] = bs
        self.value[ix] = v


def _side_counts(taken):
    nt = int(np.count_nonzero(taken))
    return np.where(taken, nt, taken.size - nt)


def assign_weight_derivs(groups, S, n, cfg, path_counts=None):
    """``(S, n)`` array of weight derivatives borrowed by each sample."""
    asg = _Assigner(S, n)
    starved = 0
    for grp in groups:
        if grp.ti == ZERO:
            continue
        f0, window, score = branch_stats(grp.g, cfg.delta, cfg.bandwidth)
        if f0 is None:
            starved += 1
            continue
        coef = -f0 / S
        if grp.ti >= 0:
            t = grp.tdata if window is None else grp.tdata[window]
            d = coef * float(t.sum())
            if d == 0.0:
                continue
            cols = np.array([grp.ti])
            D = np.array([d])
        else:
            T = grp.tdata if window is None else grp.tdata[window]
            Dfull = coef * T.sum(axis=0)
            cols = np.flatnonzero(Dfull)
            if cols.size == 0:
                continue
            D = Dfull[cols]
        if path_counts is None:
            denom = _side_counts(grp.taken)
        else:
            denom = path_counts[grp.lanes]
        sign = np.where(grp.taken, 1.0, -1.0) / denom
        asg.offer(grp.lanes, cols, score, grp.seq, sign[:, None] * D[None, :])
    return asg.value, starved


def _path_counts(groups, S):
    """Samples sharing each sample's exact path (0 unvisited, 1 false, 2 true per branch)."""
    if not groups:
        return np.full(S, S)
    sig = np.zeros((S, len(groups)), dtype=np.int8)
    for j, grp in enumerate(groups):
        sig[grp.lanes, j] = np.where(grp.taken, 2, 1)
    _, inv, counts = np.unique(sig, axis=0, return_inverse=True, return_counts=True)
    return counts[inv.ravel()]


def _lanes_of(err, S):
    lanes = getattr(err, "lanes", None)
    return lanes if lanes is not None else range(S)


def dgo_estimate(program, x, cfg=None):
    """Smoothed expectation and gradient of ``program`` at ``x`` by DGO."""
    cfg = cfg or DgoConfig()
    if not cfg.batched:
        return dgo_estimate_reference(program, x, cfg)
    n = program_dim(program)
    S = cfg.samples
    X = sample_points(x, cfg)
    rec = BatchRecorder(S, n)
    ctx = BatchContext(n, S, tangents=True, recorder=rec)
    try:
        with np.errstate(all="ignore"):
            y = program(ctx, ctx.inputs(X), make_rng(cfg.prog_seed))
    except (SmoothGradError, ArithmeticError) as e:
        raise SampleError(_lanes_of(e, S), e) from e
    yv = lane_values(y, S)
    G = lane_gradients(y, S, n)
    groups = groups_from_recorder(rec)
    counts = _path_counts(groups, S) if cfg.normalization == "path" else None
    A, starved = assign_weight_derivs(groups, S, n, cfg, counts)
    pathwise = G.mean(axis=0)
    correction = yv @ A
    contrib = G + S * yv[:, None] * A
    stderr = contrib.std(axis=0, ddof=1) / math.sqrt(S)
    return GradResult(float(yv.mean()), pathwise + correction, stderr,
                      info={"branches": len(groups), "starved": starved,
                            "pathwise": pathwise})


# -- one-sample-at-a-time reference -------------------------------------------

def dgo_sample(program, x, cfg, s, points=None):
    """Run sample ``s`` under AD with branch logging."""
    if points is None:
        points = sample_points(x, cfg)
    xs = points[s]
    try:
        y, grad, log = run_ad(program, xs, cfg.prog_seed, log=True)
    except (SmoothGradError, ArithmeticError) as e:
        raise SampleError([s], e) from e
    records = [BranchRecord(e.key, s, e.g, e.tangent, e.taken) for e in log]
    sig = tuple((r.branch_id, r.taken) for r in records)
    return SampleRun(s, xs, y, grad, sig), records


def dgo_estimate_reference(program, x, cfg):
    """Literal per-sample implementation; slow, used to check the batched path."""
    n = program_dim(program)
    S = cfg.samples
    pts = sample_points(x, cfg)
    runs, recs = [], []
    for s in range(S):
        run, r = dgo_sample(program, x, cfg, s, pts)
        runs.append(run)
        recs.append(r)

    by_key = {}
    for r in recs:
        for rec in r:
            by_key.setdefault(rec.branch_id, []).append(rec)
    deriv, score, side_n = {}, {}, {}
    starved = 0
    for key, lst in by_key.items():
        g = np.array([rec.g_value for rec in lst])
        f0, window, sc = branch_stats(g, cfg.delta, cfg.bandwidth)
        score[key] = sc
        if f0 is None:
            if any(np.any(rec.g_tangent) for rec in lst):
                starved += 1
            deriv[key] = np.zeros(n)
        else:
            acc = np.zeros(n)
            for rec, inside in zip(lst, window if window is not None else [True] * len(lst)):
                if inside:
                    acc += rec.g_tangent
            deriv[key] = -f0 / S * acc
        nt = sum(1 for rec in lst if rec.taken)
        side_n[key] = (nt, len(lst) - nt)

    path_n = Counter(frozenset(run.signature) for run in runs)
    A = np.zeros((S, n))
    for s, (run, r) in enumerate(zip(runs, recs)):
        for k in range(n):
            best, chosen = None, None
            for rec in r:
                d = deriv[rec.branch_id][k]
                if d == 0.0:
                    continue
                sc = score[rec.branch_id]
                if best is None or sc < best:
                    best, chosen = sc, rec
            if chosen is None:
                continue
            d = deriv[chosen.branch_id][k]
            if cfg.normalization == "path":
                denom = path_n[frozenset(run.signature)]
            else:
                nt, nf = side_n[chosen.branch_id]
                denom = nt if chosen.taken else nf
            A[s, k] = (d if chosen.taken else -d) / denom
    yv = np.array([run.y for run in runs])
    G = np.array([run.pathwise_grad for run in runs]).reshape(S, n)
    pathwise = G.mean(axis=0)
    contrib = G + S * yv[:, None] * A
    stderr = contrib.std(axis=0, ddof=1) / math.sqrt(S)
    return GradResult(float(yv.mean()), pathwise + yv @ A, stderr,
                      info={"branches": len(by_key), "starved": starved, "pathwise": pathwise})
