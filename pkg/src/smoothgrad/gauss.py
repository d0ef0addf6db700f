"""Gaussian primitives: pdf/cdf, branch probabilities, moment matching, KDE."""

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import DegenerateMergeError

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
BANDWIDTH_FLOOR = 1e-6


def normal_cdf(z):
    # erfc keeps full relative precision in the lower tail
    return 0.5 * math.erfc(-z / SQRT2)


def normal_pdf(z):
    return INV_SQRT_2PI * math.exp(-0.5 * z * z)


def value_of(x):
    """Plain float behind a DualReal (or the float itself)."""
    return x.value if hasattr(x, "value") else x


@dataclass(frozen=True)
class Gaussian1D:
    """Normal distribution; ``stddev == 0`` is a point mass.

    Either field may hold a DualReal.
    """

    mean: Any
    stddev: Any = 0.0

    def __post_init__(self):
        if value_of(self.stddev) < 0:
            raise ValueError("stddev must be non-negative")


@dataclass(frozen=True)
class WeightedComponent:
    weight: Any
    g: Gaussian1D

    def __post_init__(self):
        w = value_of(self.weight)
        if not 0.0 <= w <= 1.0:
            raise ValueError(f"component weight {w!r} outside [0, 1]")


def prob_le_zero(mean, var):
    """P(B <= 0) for B ~ N(mean, var), differentiable in mean (and var if smooth).

    A point mass gives a crisp 0 or 1, and 0.5 exactly at 0.
    """
    v = value_of(var)
    if v <= 0.0:
        m = value_of(mean)
        return 1.0 if m < 0 else (0.0 if m > 0 else 0.5)
    if hasattr(var, "sqrt"):
        z = -mean / var.sqrt()
        if hasattr(z, "chain"):
            return z.chain(normal_cdf(z.value), normal_pdf(z.value))
        return normal_cdf(z)
    sd = math.sqrt(v)
    if hasattr(mean, "chain"):
        z = -mean.value / sd
        return mean.chain(normal_cdf(z), -normal_pdf(z) / sd)
    return normal_cdf(-mean / sd)


def prob_cond_true(b):
    """Probability that a condition ``B <= 0`` holds, for ``b`` a Gaussian1D."""
    sd = b.stddev
    return prob_le_zero(b.mean, sd * sd)


def merge_raw(wa, ma, va, wb, mb, vb):
    """Moment-match two weighted components given as (weight, mean, variance).

    Works on floats and DualReals alike.  Returns ``(w, mean, var)`` with the
    variance clamped at 0.
    """
    w = wa + wb
    if value_of(w) == 0.0:
        raise DegenerateMergeError("cannot merge two components of zero total weight")
    m = (wa * ma + wb * mb) / w
    da = ma - m
    db = mb - m
    v = (wa * (va + da * da) + wb * (vb + db * db)) / w
    if value_of(v) < 0.0:
        v = 0.0
    return w, m, v


def merge_moments(a, b):
    """Merge two WeightedComponents into one with the same first two moments."""
    w, m, v = merge_raw(a.weight, a.g.mean, a.g.stddev * a.g.stddev,
                        b.weight, b.g.mean, b.g.stddev * b.g.stddev)
    if value_of(v) == 0.0:
        sd = 0.0
    else:
        sd = v.sqrt() if hasattr(v, "sqrt") else math.sqrt(v)
    return WeightedComponent(w, Gaussian1D(m, sd))


def kde_at(points, x0, bandwidth):
    """Gaussian kernel density estimate of ``points`` evaluated at ``x0``."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise ValueError("kde_at needs at least one point")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    z = (x0 - pts) / bandwidth
    return float(np.exp(-0.5 * z * z).sum()) * INV_SQRT_2PI / (pts.size * bandwidth)


def silverman_bandwidth(points):
    """1.06 * sd * S**(-1/5), floored at 1e-6."""
    pts = np.asarray(points, dtype=float)
    if pts.size < 2:
        return BANDWIDTH_FLOOR
    h = 1.06 * float(pts.std(ddof=1)) * pts.size ** -0.2
    return max(h, BANDWIDTH_FLOOR)
