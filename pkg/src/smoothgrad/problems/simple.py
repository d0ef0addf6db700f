"""Small programs with known answers: step function, quadratic, nested branches."""

import itertools
import math

import numpy as np

from ..gauss import normal_cdf, normal_pdf
from .base import Problem


class Heaviside(Problem):
    """``y = 1 if x >= 0 else 0``."""

    name = "heaviside"
    n = 1
    sigma0 = 0.25
    lr0 = 0.1
    fidelity_range = 1.0

    def run(self, ctx, x, rng):
        s = ctx.state(y=0.0)

        def step():
            s.y = 1.0

        ctx.branch(x[0] >= 0.0, step)
        return s.y


class Quadratic(Problem):
    """``(x - target)**2`` without any branch."""

    name = "quadratic"
    n = 1
    sigma0 = 0.1
    lr0 = 0.1

    def __init__(self, target=3.0):
        self.target = target

    def run(self, ctx, x, rng):
        d = x[0] - self.target
        return d * d


class Synthetic(Problem):
    """A chain of ``depth`` branches over two inputs and one accumulator.

    Branch ``k`` tests ``a_k * x[k % 2] + b_k * y + c_k <= 0``.  When it holds,
    ``y += d_k + g_k * x[1 - k % 2]``; otherwise ``y *= r_k``.  All operations
    are affine, so the path states stay exactly Gaussian and a path
    enumeration (:func:`synthetic_oracle`) gives the untruncated answer.  With
    ``g_0 = 0`` a depth of one is a scaled step function.
    """

    n = 2
    sigma0 = 0.5
    lr0 = 0.05
    fidelity_range = 2.0

    def __init__(self, depth=4, seed=3):
        if depth < 1:
            raise ValueError("depth must be at least 1")
        self.depth = depth
        self.name = f"synthetic{depth}"
        rng = np.random.default_rng(seed)
        sign = np.where(rng.random(depth) < 0.5, -1.0, 1.0)
        self.a = sign * rng.uniform(0.5, 1.5, depth)
        self.b = rng.uniform(-0.6, 0.6, depth)
        self.c = rng.uniform(-0.5, 0.5, depth)
        self.d = rng.uniform(-1.0, 1.0, depth)
        self.g = rng.uniform(-1.0, 1.0, depth)
        self.g[0] = 0.0
        self.r = rng.uniform(0.5, 1.0, depth)

    def run(self, ctx, x, rng):
        s = ctx.state(y=0.0)
        for k in range(self.depth):
            i = k % 2
            a, b, c, d, g, r = (float(v[k]) for v in
                                (self.a, self.b, self.c, self.d, self.g, self.r))

            def gain():
                s.y = s.y + (d + g * x[1 - i])

            def decay():
                s.y = s.y * r

            ctx.branch(a * x[i] + b * s.y + c <= 0.0, gain, decay)
        return s.y


def synthetic_oracle(prog, x, sigma):
    """Enumerate all ``2**depth`` paths of a :class:`Synthetic` program.

    Each path carries the mean of ``y`` as an affine function of the input
    means, its variance under independent propagation, and a weight equal to
    the product of the branch probabilities along it.  Returns the expectation
    and its gradient.
    """
    x = np.asarray(x, dtype=float)
    sig2 = np.broadcast_to(np.asarray(sigma, dtype=float) ** 2, (2,))
    total = 0.0
    grad = np.zeros(2)
    for outcome in itertools.product((True, False), repeat=prog.depth):
        w, dw = 1.0, np.zeros(2)
        coef, const, var = np.zeros(2), 0.0, 0.0
        for k, took in enumerate(outcome):
            i = k % 2
            a, b, c = prog.a[k], prog.b[k], prog.c[k]
            mu_b = a * x[i] + b * (coef @ x + const) + c
            dmu_b = b * coef.copy()
            dmu_b[i] += a
            var_b = a * a * sig2[i] + b * b * var
            if var_b > 0:
                sd = math.sqrt(var_b)
                z = -mu_b / sd
                q, dq = normal_cdf(z), -normal_pdf(z) / sd * dmu_b
            else:
                q = 1.0 if mu_b < 0 else (0.0 if mu_b > 0 else 0.5)
                dq = np.zeros(2)
            if not took:
                q, dq = 1.0 - q, -dq
            dw = dw * q + w * dq
            w *= q
            if took:
                j = 1 - i
                const += prog.d[k]
                coef = coef.copy()
                coef[j] += prog.g[k]
                var += prog.g[k] ** 2 * sig2[j]
            else:
                coef = coef * prog.r[k]
                const *= prog.r[k]
                var *= prog.r[k] ** 2
        mean_y = coef @ x + const
        total += w * mean_y
        grad += dw * mean_y + w * coef
    return total, grad
