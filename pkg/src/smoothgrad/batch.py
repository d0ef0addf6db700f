"""Lane-vectorised execution: S Monte Carlo samples in one pass.

Every smooth value holds one entry per lane.  A branch evaluates its
condition on all lanes and runs each body under the mask of lanes that take
it; writes to ``ctx.state``/``ctx.array`` slots only land on active lanes.
For programs that follow the rules in :mod:`smoothgrad.api` this gives
exactly the per-sample results of running the samples one by one, at numpy
speed.

Values come in three kinds:

* Python floats: identical on every lane, no derivative;
* ``numpy.ndarray`` of shape ``(S,)``: lane-varying, no derivative;
* :class:`BatchDual`: lane-varying with a forward-mode tangent that is either
  absent, a single input column, or a dense ``(S, n)`` block.
"""

import math

import numpy as np

from .api import DEFAULT_MAX_ITER, ExecContext, caller_site
from .condition import Condition
from .errors import AdNumericError, RunawayLoopError, SmoothUsageError, UnsupportedOpError

ZERO = -1
DENSE = -2

DIV_TINY = 1e-300

_NUM = (int, float, np.integer, np.floating)


def _col(c):
    return c[:, None] if isinstance(c, np.ndarray) else c


def _bd(ctx, val, i, t):
    r = BatchDual.__new__(BatchDual)
    r.ctx = ctx
    r.val = val
    r.i = i
    r.t = t
    return r


def _scale(ctx, val, c, a):
    ai = a.i
    if ai == ZERO:
        return _bd(ctx, val, ZERO, None)
    if ai >= 0:
        return _bd(ctx, val, ai, c * a.t)
    return _bd(ctx, val, DENSE, _col(c) * a.t)


def _comb(ctx, val, ca, a, cb, b):
    ai = a.i
    bi = b.i
    if ai == ZERO:
        return _scale(ctx, val, cb, b)
    if bi == ZERO:
        return _scale(ctx, val, ca, a)
    if ai >= 0 and bi >= 0:
        if ai == bi:
            return _bd(ctx, val, ai, ca * a.t + cb * b.t)
        T = np.zeros((ctx.S, ctx.n))
        T[:, ai] = ca * a.t
        T[:, bi] = cb * b.t
        return _bd(ctx, val, DENSE, T)
    if ai == DENSE and bi == DENSE:
        return _bd(ctx, val, DENSE, _col(ca) * a.t + _col(cb) * b.t)
    if ai == DENSE:
        T = _col(ca) * a.t
        T[:, bi] += cb * b.t
    else:
        T = _col(cb) * b.t
        T[:, ai] += ca * a.t
    return _bd(ctx, val, DENSE, T)


def _values(x):
    return x.val if isinstance(x, BatchDual) else x


def select(ctx, m, x, y):
    """Lane-wise ``x if m else y``; keeps the smooth type if either side has it."""
    xd = isinstance(x, BatchDual)
    yd = isinstance(y, BatchDual)
    if not xd and not yd:
        if isinstance(x, _NUM) and isinstance(y, _NUM) and x == y:
            return x
        return np.where(m, x, y)
    val = np.where(m, _values(x), _values(y))
    xi = x.i if xd else ZERO
    yi = y.i if yd else ZERO
    if xi == ZERO and yi == ZERO:
        return _bd(ctx, val, ZERO, None)
    if yi == ZERO and xi >= 0:
        return _bd(ctx, val, xi, np.where(m, x.t, 0.0))
    if xi == ZERO and yi >= 0:
        return _bd(ctx, val, yi, np.where(m, 0.0, y.t))
    if xi >= 0 and xi == yi:
        return _bd(ctx, val, xi, np.where(m, x.t, y.t))
    X = x.dense_tangent() if xd else 0.0
    Y = y.dense_tangent() if yd else 0.0
    return _bd(ctx, val, DENSE, np.where(m[:, None], X, Y))


class BatchDual:
    """Per-lane values with a shared-structure forward-mode tangent."""

    __slots__ = ("val", "i", "t", "ctx")
    __array_ufunc__ = None

    def __init__(self, ctx, val, index=ZERO, tangent=None):
        self.ctx = ctx
        self.val = np.asarray(val, dtype=float)
        self.i = index
        self.t = tangent

    # -- tangent access -------------------------------------------------

    def dense_tangent(self):
        if self.i == DENSE:
            return self.t
        T = np.zeros((self.ctx.S, self.ctx.n))
        if self.i >= 0:
            T[:, self.i] = self.t
        return T

    def tangent_rows(self, lanes):
        """Tangent restricted to ``lanes`` as ``(index, data)``."""
        if self.i == ZERO:
            return ZERO, None
        return self.i, self.t[lanes]

    # -- helpers --------------------------------------------------------

    def _check(self, bad, op, what):
        m = self.ctx.mask
        if m is not None:
            bad = bad & m
        if bad.any():
            lanes = np.flatnonzero(bad).tolist()
            err = AdNumericError(op, f"{what} on lane(s) {lanes[:8]}")
            err.lanes = lanes
            raise err

    # -- arithmetic -----------------------------------------------------

    def __add__(self, o):
        if isinstance(o, BatchDual):
            return _comb(self.ctx, self.val + o.val, 1.0, self, 1.0, o)
        if isinstance(o, (_NUM, np.ndarray)):
            return _bd(self.ctx, self.val + o, self.i, self.t)
        return NotImplemented

    def __radd__(self, o):
        if isinstance(o, (_NUM, np.ndarray)):
            return _bd(self.ctx, o + self.val, self.i, self.t)
        return NotImplemented

    def __sub__(self, o):
        if isinstance(o, BatchDual):
            return _comb(self.ctx, self.val - o.val, 1.0, self, -1.0, o)
        if isinstance(o, (_NUM, np.ndarray)):
            return _bd(self.ctx, self.val - o, self.i, self.t)
        return NotImplemented

    def __rsub__(self, o):
        if isinstance(o, (_NUM, np.ndarray)):
            return _scale(self.ctx, o - self.val, -1.0, self)
        return NotImplemented

    def __mul__(self, o):
        if isinstance(o, BatchDual):
            return _comb(self.ctx, self.val * o.val, o.val, self, self.val, o)
        if isinstance(o, (_NUM, np.ndarray)):
            return _scale(self.ctx, self.val * o, o, self)
        return NotImplemented

    def __rmul__(self, o):
        if isinstance(o, (_NUM, np.ndarray)):
            return _scale(self.ctx, o * self.val, o, self)
        return NotImplemented

    def __truediv__(self, o):
        if isinstance(o, BatchDual):
            bv = o.val
            self._check(np.abs(bv) < DIV_TINY, "÷", "division by ~0")
            inv = 1.0 / bv
            q = self.val / bv
            return _comb(self.ctx, q, inv, self, -q * inv, o)
        if isinstance(o, _NUM):
            if abs(o) < DIV_TINY:
                raise AdNumericError("÷", f"division by {o!r}")
            return _scale(self.ctx, self.val / o, 1.0 / o, self)
        if isinstance(o, np.ndarray):
            self._check(np.abs(o) < DIV_TINY, "÷", "division by ~0")
            return _scale(self.ctx, self.val / o, 1.0 / o, self)
        return NotImplemented

    def __rtruediv__(self, o):
        if isinstance(o, (_NUM, np.ndarray)):
            bv = self.val
            self._check(np.abs(bv) < DIV_TINY, "÷", "division by ~0")
            q = o / bv
            return _scale(self.ctx, q, -q / bv, self)
        return NotImplemented

    def __pow__(self, o):
        if isinstance(o, _NUM):
            a = self.val
            if o == 0:
                return _bd(self.ctx, np.ones_like(a), ZERO, None)
            if float(o) != int(o):
                self._check(a < 0, "pow", "negative base with fractional exponent")
            if o < 1:
                self._check(a == 0, "pow", "derivative unbounded at 0")
            return _scale(self.ctx, a ** o, o * a ** (o - 1), self)
        if isinstance(o, BatchDual):
            a = self.val
            self._check(a <= 0, "pow", "base must be positive for a smooth exponent")
            v = a ** o.val
            return _comb(self.ctx, v, o.val * a ** (o.val - 1), self, v * np.log(a), o)
        return NotImplemented

    def __rpow__(self, o):
        if isinstance(o, _NUM):
            if o <= 0:
                raise AdNumericError("pow", f"non-positive base {o!r} with smooth exponent")
            v = o ** self.val
            return _scale(self.ctx, v, v * math.log(o), self)
        return NotImplemented

    def __neg__(self):
        return _scale(self.ctx, -self.val, -1.0, self)

    def __pos__(self):
        return self

    def __abs__(self):
        raise UnsupportedOpError("abs on a smooth value; express the kink with a branch")

    # -- unary functions ------------------------------------------------

    def exp(self):
        v = np.exp(self.val)
        return _scale(self.ctx, v, v, self)

    def log(self):
        a = self.val
        self._check(a <= 0, "log", "non-positive argument")
        return _scale(self.ctx, np.log(a), 1.0 / a, self)

    def sqrt(self):
        a = self.val
        self._check(a < 0, "sqrt", "negative argument")
        v = np.sqrt(a)
        if self.i != ZERO:
            self._check(v == 0, "sqrt", "derivative unbounded at 0")
        return _scale(self.ctx, v, 0.5 / v, self)

    def sin(self):
        return _scale(self.ctx, np.sin(self.val), np.cos(self.val), self)

    def cos(self):
        return _scale(self.ctx, np.cos(self.val), -np.sin(self.val), self)

    def tanh(self):
        v = np.tanh(self.val)
        return _scale(self.ctx, v, 1.0 - v * v, self)

    def sigmoid(self):
        v = 0.5 * (1.0 + np.tanh(0.5 * self.val))
        return _scale(self.ctx, v, v * (1.0 - v), self)

    def minimum(self, o):
        return select(self.ctx, self.val <= _values(o), self, o)

    def maximum(self, o):
        return select(self.ctx, self.val >= _values(o), self, o)

    # -- comparisons ----------------------------------------------------

    def __le__(self, o):
        return Condition(self, "<=", o)

    def __lt__(self, o):
        return Condition(self, "<", o)

    def __ge__(self, o):
        return Condition(self, ">=", o)

    def __gt__(self, o):
        return Condition(self, ">", o)

    def __eq__(self, o):
        raise SmoothUsageError("== on smooth values is not supported")

    def __ne__(self, o):
        raise SmoothUsageError("!= on smooth values is not supported")

    __hash__ = object.__hash__

    def __bool__(self):
        raise SmoothUsageError("a smooth value has no truth value; use ctx.branch")

    def __float__(self):
        raise SmoothUsageError("a batched value is not a single float")

    def __repr__(self):
        kind = {ZERO: "const"}.get(self.i, "dense" if self.i == DENSE else f"e{self.i}")
        return f"BatchDual(S={self.val.shape[0]}, tangent={kind})"


class MaskedState:
    """Attribute container whose writes respect the active lane mask."""

    __slots__ = ("_ctx", "_vals")

    def __init__(self, ctx, init):
        object.__setattr__(self, "_ctx", ctx)
        object.__setattr__(self, "_vals", dict(init))

    def __getattr__(self, name):
        try:
            return self._vals[name]
        except KeyError:
            raise AttributeError(name) from None

    def __setattr__(self, name, v):
        ctx = self._ctx
        m = ctx.mask
        if m is None:
            self._vals[name] = v
            return
        try:
            old = self._vals[name]
        except KeyError:
            raise SmoothUsageError(
                f"state field {name!r} first assigned inside a branch; initialise it up front") from None
        self._vals[name] = select(ctx, m, v, old)


class MaskedArray:
    """Indexable sequence whose writes respect the active lane mask."""

    __slots__ = ("_ctx", "_vals")

    def __init__(self, ctx, values):
        self._ctx = ctx
        self._vals = list(values)

    def __len__(self):
        return len(self._vals)

    def __getitem__(self, i):
        return self._vals[i]

    def __iter__(self):
        return iter(self._vals)

    def __setitem__(self, i, v):
        ctx = self._ctx
        m = ctx.mask
        if m is None:
            self._vals[i] = v
        else:
            self._vals[i] = select(ctx, m, v, self._vals[i])


class BatchRecorder:
    """Collects branch encounters per dynamic key ``(site, occurrence)``.

    ``entries`` keeps the order of first encounter; each entry is a list of
    chunks ``(lanes, g, tangent_index, tangent_data, taken, seq)`` where
    ``seq`` numbers branch evaluations in execution order.
    """

    def __init__(self, S, n):
        self.S = S
        self.n = n
        self.entries = {}
        self.events = 0

    def next_seq(self):
        self.events += 1
        return self.events

    def add(self, key, lanes, g, ti, tdata, taken, seq):
        chunk = (lanes, g, ti, tdata, taken, seq)
        lst = self.entries.get(key)
        if lst is None:
            self.entries[key] = [chunk]
        else:
            lst.append(chunk)


class BatchContext(ExecContext):
    """Executes a program on ``S`` lanes at once."""

    backend = "batch"

    def __init__(self, n, S, *, tangents=True, recorder=None, max_iter=DEFAULT_MAX_ITER):
        super().__init__(n, max_iter)
        self.S = S
        self.tangents = tangents
        self.recorder = recorder
        self.mask = None
        self._all = np.arange(S)
        self._occ = {}

    def inputs(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape != (self.S, self.n):
            raise ValueError(f"expected inputs of shape {(self.S, self.n)}, got {X.shape}")
        if not self.tangents:
            return [X[:, i].copy() for i in range(self.n)]
        ones = np.ones(self.S)
        return [BatchDual(self, X[:, i].copy(), i, ones) for i in range(self.n)]

    def state(self, **init):
        return MaskedState(self, init)

    def array(self, values):
        return MaskedArray(self, values)

    # -- control flow ---------------------------------------------------

    def _lanes(self):
        m = self.mask
        return self._all if m is None else np.flatnonzero(m)

    def _record(self, site, g, taken):
        lanes = self._lanes()
        occ = self._occ.get(site)
        if occ is None:
            occ = self._occ[site] = np.zeros(self.S, dtype=np.int64)
        o = occ[lanes]
        occ[lanes] += 1
        gl = g.val[lanes]
        tl = taken[lanes]
        ti, td = g.tangent_rows(lanes)
        rec = self.recorder
        seq = rec.next_seq()
        if o.min() == o.max():
            rec.add((site, int(o[0])), lanes, gl, ti, td, tl, seq)
            return
        for val in np.unique(o):
            sel = o == val
            rec.add((site, int(val)), lanes[sel], gl[sel], ti,
                    None if td is None else td[sel], tl[sel], seq)

    def _truth(self, cond, site):
        """Per-lane truth of ``cond`` (a bool for lane-uniform conditions)."""
        if isinstance(cond, Condition):
            a, b = cond.operands()
            g = a - b
            if isinstance(g, BatchDual):
                taken = g.val < 0 if cond.strict else g.val <= 0
                if self.recorder is not None:
                    self._record(site, g, taken)
                return taken
            if isinstance(g, np.ndarray):
                return g < 0 if cond.strict else g <= 0
            return bool(g < 0 if cond.strict else g <= 0)
        if isinstance(cond, (bool, np.bool_)):
            return bool(cond)
        if isinstance(cond, np.ndarray) and cond.dtype == bool:
            return cond
        raise SmoothUsageError(f"branch condition of type {type(cond).__name__}")

    def _run(self, m, body):
        prev = self.mask
        self.mask = None if (prev is None and m.all()) else m
        try:
            body()
        finally:
            self.mask = prev

    def branch(self, cond, then, else_=None, site=None):
        if site is None and isinstance(cond, Condition):
            site = caller_site()
        taken = self._truth(cond, site)
        if isinstance(taken, bool):
            body = then if taken else else_
            if body is not None:
                body()
            return
        m = self.mask
        if then is not None:
            mt = taken if m is None else (m & taken)
            if mt.any():
                self._run(mt, then)
        if else_ is not None:
            me = ~taken if m is None else (m & ~taken)
            if me.any():
                self._run(me, else_)

    def loop(self, cond_fn, body, site=None, max_iter=None):
        if site is None:
            site = caller_site()
        cap = self.max_iter if max_iter is None else max_iter
        prev = self.mask
        it = 0
        try:
            while True:
                taken = self._truth(cond_fn(), site)
                if isinstance(taken, bool):
                    if not taken:
                        break
                else:
                    cur = self.mask
                    m = taken if cur is None else (cur & taken)
                    if not m.any():
                        break
                    self.mask = None if (cur is None and m.all()) else m
                it += 1
                if it > cap:
                    raise RunawayLoopError(f"loop exceeded {cap} iterations")
                body()
        finally:
            self.mask = prev


def lane_values(y, S):
    """Per-lane output values as a float array."""
    if isinstance(y, BatchDual):
        return y.val
    if isinstance(y, np.ndarray):
        return y.astype(float)
    return np.full(S, float(y))


def lane_gradients(y, S, n):
    """Per-lane output tangents as an ``(S, n)`` array."""
    if isinstance(y, BatchDual):
        return y.dense_tangent()
    return np.zeros((S, n))
