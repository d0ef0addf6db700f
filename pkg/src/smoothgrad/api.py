"""The interface programs are written against.

A program is a callable ``run(ctx, x, rng)`` where ``x`` is a list of smooth
scalars, ``rng`` a :class:`numpy.random.Generator` and ``ctx`` the execution
context of whichever back-end is active.  The same program text then runs
crisp, under AD, batched over Monte Carlo lanes, or under smooth
interpretation.  The rules that make this work:

* input-dependent control flow goes through ``ctx.branch`` / ``ctx.loop``;
* state that a branch body mutates lives in ``ctx.state(...)`` or
  ``ctx.array(...)``, never in plain Python locals;
* branch bodies do not draw from ``rng`` (draw everything up front);
* math on smooth values uses the functions of this module.
"""

import math
import sys
import types
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .ad import AdContext, DualReal, make_input
from .condition import Condition, margin_holds
from .errors import RunawayLoopError, SmoothUsageError

DEFAULT_MAX_ITER = 10 ** 6

_NUM = (int, float, np.integer, np.floating)


# -- smooth math --------------------------------------------------------------

def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _np_sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _unary(name, scalar_fn, array_fn):
    def fn(x):
        if isinstance(x, _NUM):
            return scalar_fn(x)
        if isinstance(x, np.ndarray):
            return array_fn(x)
        return getattr(x, name)()
    fn.__name__ = name
    return fn


exp = _unary("exp", math.exp, np.exp)
log = _unary("log", math.log, np.log)
sqrt = _unary("sqrt", math.sqrt, np.sqrt)
sin = _unary("sin", math.sin, np.sin)
cos = _unary("cos", math.cos, np.cos)
tanh = _unary("tanh", math.tanh, np.tanh)
sigmoid = _unary("sigmoid", _sigmoid, _np_sigmoid)


def minimum(a, b):
    if isinstance(a, _NUM) and isinstance(b, _NUM):
        return a if a <= b else b
    if hasattr(a, "minimum"):
        return a.minimum(b)
    if hasattr(b, "minimum"):
        return b.minimum(a)
    return np.minimum(a, b)


def maximum(a, b):
    if isinstance(a, _NUM) and isinstance(b, _NUM):
        return a if a >= b else b
    if hasattr(a, "maximum"):
        return a.maximum(b)
    if hasattr(b, "maximum"):
        return b.maximum(a)
    return np.maximum(a, b)


def total(values, start=0.0):
    """Left-to-right sum (works for every smooth type)."""
    acc = start
    for v in values:
        acc = acc + v
    return acc


# -- results and programs -----------------------------------------------------

@dataclass
class GradResult:
    """Smoothed expectation and gradient returned by every estimator."""

    expectation: float
    gradient: np.ndarray
    stderr: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)


@dataclass
class SmoothProgram:
    n: int
    run: Callable
    name: str = "program"

    def __call__(self, ctx, x, rng):
        return self.run(ctx, x, rng)


def program_dim(program):
    n = getattr(program, "n", None)
    if n is None:
        raise SmoothUsageError("program has no input dimension 'n'")
    return int(n)


def caller_site(depth=2):
    f = sys._getframe(depth)
    return (f.f_code, f.f_lineno)


# -- back-ends -----------------------------------------------------------------

class ExecContext:
    """Common surface of all back-ends."""

    backend = "abstract"

    def __init__(self, n, max_iter=DEFAULT_MAX_ITER):
        self.n = n
        self.max_iter = max_iter

    def state(self, **init):
        return types.SimpleNamespace(**init)

    def array(self, values):
        return list(values)

    def _taken(self, cond, site):
        raise NotImplementedError

    def branch(self, cond, then, else_=None, site=None):
        """Run ``then`` if ``cond`` holds, else ``else_`` (each optional)."""
        if site is None and isinstance(cond, Condition):
            site = caller_site()
        if self._taken(cond, site):
            if then is not None:
                then()
        elif else_ is not None:
            else_()

    def loop(self, cond_fn, body, site=None, max_iter=None):
        """``while cond_fn(): body()`` with every test routed through the back-end."""
        if site is None:
            site = caller_site()
        cap = self.max_iter if max_iter is None else max_iter
        it = 0
        while self._taken(cond_fn(), site):
            it += 1
            if it > cap:
                raise RunawayLoopError(f"loop exceeded {cap} iterations")
            body()


def _crisp_truth(cond):
    if isinstance(cond, Condition):
        a, b = cond.operands()
        a = a.value if isinstance(a, DualReal) else a
        b = b.value if isinstance(b, DualReal) else b
        return margin_holds(a - b, cond.strict)
    if isinstance(cond, (bool, np.bool_)):
        return bool(cond)
    raise SmoothUsageError(f"branch condition of type {type(cond).__name__}")


class CrispContext(ExecContext):
    """Plain floating-point execution."""

    backend = "crisp"

    def _taken(self, cond, site):
        return _crisp_truth(cond)


class BranchLogEntry:
    __slots__ = ("key", "g", "tangent", "taken")

    def __init__(self, key, g, tangent, taken):
        self.key = key
        self.g = g
        self.tangent = tangent
        self.taken = taken

    def __repr__(self):
        return f"BranchLogEntry(key={self.key!r}, g={self.g!r}, taken={self.taken})"


class ADContext(ExecContext):
    """Scalar forward-mode AD execution of one sample.

    With ``log=True`` every branch whose condition involves a DualReal is
    recorded as a :class:`BranchLogEntry` keyed by ``(site, occurrence)``.
    """

    backend = "ipa"

    def __init__(self, n, *, log=False, force_dense=False, max_iter=DEFAULT_MAX_ITER):
        super().__init__(n, max_iter)
        self.ad = AdContext(n, force_dense=force_dense)
        self.logging = log
        self.records = []
        self._occ = {}

    def inputs(self, x):
        return [make_input(self.ad, i, float(v)) for i, v in enumerate(x)]

    def _taken(self, cond, site):
        if isinstance(cond, Condition):
            a, b = cond.operands()
            if isinstance(a, DualReal) or isinstance(b, DualReal):
                m = a - b
                taken = margin_holds(m.value, cond.strict)
                if self.logging:
                    occ = self._occ.get(site, 0)
                    self._occ[site] = occ + 1
                    self.records.append(BranchLogEntry((site, occ), m.value, m.gradient(), taken))
                return taken
            return margin_holds(a - b, cond.strict)
        if isinstance(cond, (bool, np.bool_)):
            return bool(cond)
        raise SmoothUsageError(f"branch condition of type {type(cond).__name__}")


def make_rng(seed):
    return np.random.default_rng(seed)


def run_crisp(program, x, seed=0):
    """Execute ``program`` once on plain floats."""
    ctx = CrispContext(program_dim(program))
    y = program(ctx, [float(v) for v in x], make_rng(seed))
    if isinstance(y, DualReal):
        return y.value
    return float(y)


def run_ad(program, x, seed=0, *, log=False, force_dense=False):
    """Execute once under scalar AD; returns ``(y, gradient, records)``."""
    n = program_dim(program)
    ctx = ADContext(n, log=log, force_dense=force_dense)
    y = program(ctx, ctx.inputs(x), make_rng(seed))
    if isinstance(y, DualReal):
        return y.value, y.gradient(), ctx.records
    return float(y), np.zeros(n), ctx.records


def expectation(ctx, y):
    """Value and gradient of a single-execution output."""
    if isinstance(y, DualReal):
        return GradResult(y.value, y.gradient())
    return GradResult(float(y), np.zeros(ctx.n))

