"""Forward-mode automatic differentiation with sparse, pooled tangents.

A :class:`DualReal` carries a value plus its derivative with respect to the
``n`` inputs of the current :class:`AdContext`.  Most intermediate values in a
simulation depend on one input or none, so the tangent is kept inline as a
single ``(index, value)`` pair until a second distinct index shows up; only
then is a dense array taken from the context's :class:`TangentPool`.
"""

import math

import numpy as np

from .condition import Condition
from .errors import AdNumericError, SmoothUsageError, UnsupportedOpError

ZERO = -1
DENSE = -2

DIV_TINY = 1e-300

_NUM = (int, float, np.integer, np.floating)


class TangentPool:
    """Free-list of dense tangent arrays of one fixed length.

    Grows on demand and never shrinks.  With ``poison=True`` released arrays
    are filled with NaN, so any use-after-release shows up in results.
    """

    def __init__(self, n, poison=False):
        self.n = n
        self.poison = poison
        self.capacity = 0
        self._free = []

    def acquire(self):
        if self._free:
            arr = self._free.pop()
            arr.fill(0.0)
            return arr
        self.capacity += 1
        return np.zeros(self.n)

    def release(self, arr):
        if self.poison:
            arr.fill(np.nan)
        self._free.append(arr)

    def __len__(self):
        return len(self._free)


class AdContext:
    """Input dimension and tangent pool for one program execution.

    ``force_dense`` seeds inputs with dense unit vectors so every operation
    takes the dense code path; it exists to check the sparse path against.
    """

    def __init__(self, n, *, force_dense=False, poison=False):
        if n < 0:
            raise ValueError("input dimension must be non-negative")
        self.n = int(n)
        self.force_dense = force_dense
        self.pool = TangentPool(self.n, poison=poison)
        self._scratch = np.empty(self.n)

    def constant(self, v):
        return DualReal(self, v)

    def input(self, i, v):
        return make_input(self, i, v)


def _blank(ctx, value):
    r = DualReal.__new__(DualReal)
    r._i = ZERO
    r._t = 0.0
    r._a = None
    r.ctx = ctx
    r.value = value
    return r


def _scaled(ctx, value, c, a):
    r = _blank(ctx, value)
    ai = a._i
    if ai >= 0:
        r._t = c * a._t
        r._i = ai
    elif ai == DENSE:
        arr = ctx.pool.acquire()
        np.multiply(a._a, c, out=arr)
        r._a = arr
        r._i = DENSE
    return r


def _copied(ctx, value, a):
    r = _blank(ctx, value)
    ai = a._i
    if ai >= 0:
        r._t = a._t
        r._i = ai
    elif ai == DENSE:
        arr = ctx.pool.acquire()
        np.copyto(arr, a._a)
        r._a = arr
        r._i = DENSE
    return r


def _lin(ctx, value, ca, a, cb, b):
    """New DualReal whose tangent is ``ca * ta + cb * tb``."""
    ai = a._i
    bi = b._i
    if ai == ZERO:
        if bi == ZERO:
            return _blank(ctx, value)
        return _scaled(ctx, value, cb, b)
    if bi == ZERO:
        return _scaled(ctx, value, ca, a)
    r = _blank(ctx, value)
    if ai >= 0 and bi >= 0:
        if ai == bi:
            r._t = ca * a._t + cb * b._t
            r._i = ai
            return r
        arr = ctx.pool.acquire()
        arr[ai] = ca * a._t
        arr[bi] = cb * b._t
    elif ai == DENSE and bi == DENSE:
        arr = ctx.pool.acquire()
        if ca == 1.0 and cb == 1.0:
            np.add(a._a, b._a, out=arr)
        else:
            scratch = ctx._scratch
            np.multiply(a._a, ca, out=arr)
            np.multiply(b._a, cb, out=scratch)
            arr += scratch
    elif ai == DENSE:
        arr = ctx.pool.acquire()
        np.multiply(a._a, ca, out=arr)
        arr[bi] += cb * b._t
    else:
        arr = ctx.pool.acquire()
        np.multiply(b._a, cb, out=arr)
        arr[ai] += ca * a._t
    r._a = arr
    r._i = DENSE
    return r


class DualReal:
    """Scalar value with a sparse forward-mode tangent.

    Supports ``+ - * / **``, the relational operators (which build a
    :class:`Condition` rather than a bool) and the unary methods used by the
    smooth math functions.  ``abs`` is rejected: a kink belongs in a branch.
    """

    __slots__ = ("value", "_i", "_t", "_a", "ctx")
    __array_ufunc__ = None

    def __init__(self, ctx, value, index=ZERO, tangent=0.0):
        self._i = ZERO
        self._t = 0.0
        self._a = None
        self.ctx = ctx
        self.value = float(value)
        if index >= 0:
            if ctx.force_dense:
                arr = ctx.pool.acquire()
                arr[index] = tangent
                self._a = arr
                self._i = DENSE
            else:
                self._t = float(tangent)
                self._i = index

    def __del__(self):
        if self._i == DENSE:
            self.ctx.pool.release(self._a)

    # -- tangent access -------------------------------------------------

    @property
    def is_dense(self):
        return self._i == DENSE

    @property
    def nnz_hint(self):
        """0, 1 or ``None`` (dense) depending on the storage in use."""
        if self._i == ZERO:
            return 0
        if self._i >= 0:
            return 1
        return None

    def gradient(self):
        g = np.zeros(self.ctx.n)
        if self._i >= 0:
            g[self._i] = self._t
        elif self._i == DENSE:
            g += self._a
        return g

    def tangent_sq_dot(self, weights):
        """``sum_i t_i**2 * weights[i]``."""
        if self._i == ZERO:
            return 0.0
        if self._i >= 0:
            return self._t * self._t * float(weights[self._i])
        return float(np.dot(self._a * self._a, weights))

    def has_tangent(self):
        return self._i != ZERO

    # -- arithmetic -----------------------------------------------------

    def __add__(self, o):
        if isinstance(o, DualReal):
            return _lin(self.ctx, self.value + o.value, 1.0, self, 1.0, o)
        if isinstance(o, _NUM):
            return _copied(self.ctx, self.value + o, self)
        return NotImplemented

    def __radd__(self, o):
        if isinstance(o, _NUM):
            return _copied(self.ctx, o + self.value, self)
        return NotImplemented

    def __sub__(self, o):
        if isinstance(o, DualReal):
            return _lin(self.ctx, self.value - o.value, 1.0, self, -1.0, o)
        if isinstance(o, _NUM):
            return _copied(self.ctx, self.value - o, self)
        return NotImplemented

    def __rsub__(self, o):
        if isinstance(o, _NUM):
            return _scaled(self.ctx, o - self.value, -1.0, self)
        return NotImplemented

    def __mul__(self, o):
        if isinstance(o, DualReal):
            return _lin(self.ctx, self.value * o.value, o.value, self, self.value, o)
        if isinstance(o, _NUM):
            return _scaled(self.ctx, self.value * o, o, self)
        return NotImplemented

    def __rmul__(self, o):
        if isinstance(o, _NUM):
            return _scaled(self.ctx, o * self.value, o, self)
        return NotImplemented

    def __truediv__(self, o):
        if isinstance(o, DualReal):
            bv = o.value
            if abs(bv) < DIV_TINY:
                raise AdNumericError("÷", f"division by {bv!r}")
            inv = 1.0 / bv
            q = self.value / bv
            return _lin(self.ctx, q, inv, self, -q * inv, o)
        if isinstance(o, _NUM):
            if abs(o) < DIV_TINY:
                raise AdNumericError("÷", f"division by {o!r}")
            return _scaled(self.ctx, self.value / o, 1.0 / o, self)
        return NotImplemented

    def __rtruediv__(self, o):
        if isinstance(o, _NUM):
            bv = self.value
            if abs(bv) < DIV_TINY:
                raise AdNumericError("÷", f"division by {bv!r}")
            q = o / bv
            return _scaled(self.ctx, q, -q / bv, self)
        return NotImplemented

    def __pow__(self, o):
        if isinstance(o, DualReal):
            return _pow_dual(self, o)
        if isinstance(o, _NUM):
            a = self.value
            if o == 0:
                return _blank(self.ctx, 1.0)
            if a < 0 and float(o) != int(o):
                raise AdNumericError("pow", f"negative base {a!r} with fractional exponent")
            if a == 0 and o < 1 and self._i != ZERO:
                raise AdNumericError("pow", "derivative unbounded at 0")
            return _scaled(self.ctx, a ** o, o * a ** (o - 1) if a != 0 or o >= 1 else 0.0, self)
        return NotImplemented

    def __rpow__(self, o):
        if isinstance(o, _NUM):
            if o <= 0:
                raise AdNumericError("pow", f"non-positive base {o!r} with smooth exponent")
            v = o ** self.value
            return _scaled(self.ctx, v, v * math.log(o), self)
        return NotImplemented

    def __neg__(self):
        return _scaled(self.ctx, -self.value, -1.0, self)

    def __pos__(self):
        return self

    def __abs__(self):
        raise UnsupportedOpError("abs on a smooth value; express the kink with a branch")

    # -- unary functions ------------------------------------------------

    def exp(self):
        v = math.exp(self.value)
        return _scaled(self.ctx, v, v, self)

    def log(self):
        a = self.value
        if a <= 0:
            raise AdNumericError("log", f"argument {a!r} not positive")
        return _scaled(self.ctx, math.log(a), 1.0 / a, self)

    def sqrt(self):
        a = self.value
        if a < 0:
            raise AdNumericError("sqrt", f"argument {a!r} negative")
        v = math.sqrt(a)
        if v == 0.0:
            if self._i != ZERO:
                raise AdNumericError("sqrt", "derivative unbounded at 0")
            return _blank(self.ctx, 0.0)
        return _scaled(self.ctx, v, 0.5 / v, self)

    def sin(self):
        return _scaled(self.ctx, math.sin(self.value), math.cos(self.value), self)

    def cos(self):
        return _scaled(self.ctx, math.cos(self.value), -math.sin(self.value), self)

    def tanh(self):
        v = math.tanh(self.value)
        return _scaled(self.ctx, v, 1.0 - v * v, self)

    def sigmoid(self):
        v = _sigmoid(self.value)
        return _scaled(self.ctx, v, v * (1.0 - v), self)

    def chain(self, value, derivative):
        """Apply a scalar function given its value and derivative at ``self``."""
        return _scaled(self.ctx, value, derivative, self)

    def minimum(self, o):
        ov = o.value if isinstance(o, DualReal) else o
        if self.value <= ov:
            return _copied(self.ctx, self.value, self)
        return _copied(self.ctx, ov, o) if isinstance(o, DualReal) else _blank(self.ctx, float(ov))

    def maximum(self, o):
        ov = o.value if isinstance(o, DualReal) else o
        if self.value >= ov:
            return _copied(self.ctx, self.value, self)
        return _copied(self.ctx, ov, o) if isinstance(o, DualReal) else _blank(self.ctx, float(ov))

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
        raise SmoothUsageError("converting a smooth value to float drops its derivative; use .value")

    def __repr__(self):
        if self._i == ZERO:
            tan = "0"
        elif self._i >= 0:
            tan = f"{self._t}·e{self._i}"
        else:
            tan = np.array2string(self._a, precision=6)
        return f"DualReal({self.value!r}, {tan})"


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _pow_dual(a, b):
    av, bv = a.value, b.value
    if av <= 0:
        if av == 0 and b._i == ZERO:
            return a ** bv
        raise AdNumericError("pow", f"base {av!r} must be positive for a smooth exponent")
    v = av ** bv
    return _lin(a.ctx, v, bv * av ** (bv - 1), a, v * math.log(av), b)


def identical(a, b):
    """True iff ``a`` and ``b`` carry the same value and the same tangent."""
    if a is b:
        return True
    if isinstance(a, DualReal):
        if not isinstance(b, DualReal) or a.value != b.value or a._i != b._i:
            return False
        if a._i == DENSE:
            return np.array_equal(a._a, b._a)
        return a._i == ZERO or a._t == b._t
    if isinstance(b, DualReal):
        return False
    return a == b


def make_input(ctx, i, v):
    """Input ``i`` with value ``v`` and unit tangent ``e_i``."""
    if not 0 <= i < ctx.n:
        raise IndexError(f"input index {i} out of range for n={ctx.n}")
    return DualReal(ctx, v, i, 1.0)


def get_gradient(a):
    """Dense copy of the tangent; constants and floats give the zero vector."""
    if isinstance(a, DualReal):
        return a.gradient()
    raise TypeError("get_gradient expects a DualReal")


def _as_dual(ctx, x):
    return x if isinstance(x, DualReal) else DualReal(ctx, x)


_BINARY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "−": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "×": lambda a, b: a * b,
    "/": lambda a, b: a / b,
    "÷": lambda a, b: a / b,
    "min": lambda a, b: a.minimum(b),
    "max": lambda a, b: a.maximum(b),
    "pow": lambda a, b: a ** b,
}

_UNARY = {
    "neg": lambda a: -a,
    "exp": DualReal.exp,
    "log": DualReal.log,
    "sqrt": DualReal.sqrt,
    "sin": DualReal.sin,
    "cos": DualReal.cos,
    "tanh": DualReal.tanh,
    "sigmoid": DualReal.sigmoid,
}


def binary_op(op, a, b):
    """Functional form of the binary operators; plain numbers become constants."""
    try:
        fn = _BINARY[op]
    except KeyError:
        raise UnsupportedOpError(f"unknown binary op {op!r}") from None
    ctx = a.ctx if isinstance(a, DualReal) else b.ctx
    return fn(_as_dual(ctx, a), _as_dual(ctx, b))


def unary_op(op, a):
    if op == "abs":
        raise UnsupportedOpError("abs on a smooth value; express the kink with a branch")
    try:
        fn = _UNARY[op]
    except KeyError:
        raise UnsupportedOpError(f"unknown unary op {op!r}") from None
    return fn(a)
