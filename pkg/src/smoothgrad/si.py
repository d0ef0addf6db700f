"""Smooth interpretation with differentiable path states.

Every program variable is tracked per control-flow path as a Gaussian whose
mean is a :class:`~smoothgrad.ad.DualReal`.  A branch splits each active path
in two, weighting the halves by the probability of the condition under that
path's Gaussian.  The number of paths is bounded by a restriction strategy
that merges or discards paths:

``ch``  merge the pair with the smallest weight-scaled moment distance
``iw``  merge the pair with the smallest unscaled moment distance
``wo``  merge the two lightest paths
``di``  discard the lightest paths and rescale the survivors
"""

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .ad import AdContext, DualReal, identical, make_input
from .api import DEFAULT_MAX_ITER, ExecContext, GradResult, make_rng, program_dim
from .api import sigmoid as _sigmoid
from .condition import Condition
from .errors import (AdNumericError, ConfigError, EmptyStateError, RunawayLoopError,
                     SmoothUsageError, UnsupportedOpError)
from .gauss import prob_le_zero

STRATEGIES = ("ch", "iw", "wo", "di")
VARIANCE_MODES = ("independent", "input-correlated")

_NUM = (int, float, np.integer, np.floating)


def _v(x):
    return x.value if isinstance(x, DualReal) else x


@dataclass(frozen=True)
class RestrictConfig:
    max_paths: int = 16
    strategy: str = "ch"
    weight_threshold: float = 1e-20

    def __post_init__(self):
        if self.max_paths < 1:
            raise ConfigError("max_paths must be at least 1")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown restrict strategy {self.strategy!r}; pick one of {STRATEGIES}")
        if not 0.0 <= self.weight_threshold < 1.0:
            raise ConfigError("weight_threshold must lie in [0, 1)")

    @property
    def branch_target(self):
        return (self.max_paths + 1) // 2


class GaussianVal:
    """One mixture element: mean (DualReal or float) and variance."""

    __slots__ = ("mean", "var")

    def __init__(self, mean, var=0.0):
        self.mean = mean
        self.var = var

    def __repr__(self):
        return f"GaussianVal({_v(self.mean)!r}, var={_v(self.var)!r})"


class PathState:
    __slots__ = ("weight", "store")

    def __init__(self, weight, store):
        self.weight = weight
        self.store = store

    def __repr__(self):
        return f"PathState(w={_v(self.weight)!r}, vars={len(self.store)})"


class SiStack:
    """Nested scopes of active paths; only the top scope is mutated."""

    def __init__(self, paths):
        self._scopes = [list(paths)]

    @property
    def top(self):
        return self._scopes[-1]

    @property
    def depth(self):
        return len(self._scopes)

    def push(self, paths):
        self._scopes.append(paths)

    def pop(self):
        if len(self._scopes) == 1:
            raise SmoothUsageError("cannot pop the root scope")
        return self._scopes.pop()

    def replace_top(self, paths):
        self._scopes[-1] = paths


# -- Gaussian arithmetic ------------------------------------------------------

class _Arith:
    """Mean/variance propagation under one variance mode."""

    def __init__(self, mode="independent", diff_var=False, sigma2=None):
        if mode not in VARIANCE_MODES:
            raise ConfigError(f"unknown variance mode {mode!r}")
        self.correlated = mode == "input-correlated"
        self.diff_var = diff_var
        self.sigma2 = None if sigma2 is None else np.asarray(sigma2, dtype=float)

    def _p(self, x):
        # partial derivative coefficients: smooth only when variances are
        return x if self.diff_var else _v(x)

    def _tvar(self, mean):
        if isinstance(mean, DualReal):
            return mean.tangent_sq_dot(self.sigma2)
        return 0.0

    def binary(self, op, a, b):
        ma, mb = a.mean, b.mean
        if op == "+":
            m = ma + mb
            if self.correlated:
                return GaussianVal(m, self._tvar(m))
            return GaussianVal(m, a.var + b.var)
        if op == "-":
            m = ma - mb
            if self.correlated:
                return GaussianVal(m, self._tvar(m))
            return GaussianVal(m, a.var + b.var)
        if op == "*":
            m = ma * mb
            if self.correlated:
                return GaussianVal(m, self._tvar(m))
            pa, pb = self._p(mb), self._p(ma)
            return GaussianVal(m, pa * pa * a.var + pb * pb * b.var)
        if op == "/":
            bv = _v(mb)
            if abs(bv) < 1e-300:
                raise AdNumericError("÷", f"division by {bv!r}")
            m = ma / mb
            if self.correlated:
                return GaussianVal(m, self._tvar(m))
            pa = 1.0 / self._p(mb)
            pb = -self._p(m) * pa
            return GaussianVal(m, pa * pa * a.var + pb * pb * b.var)
        if op == "min":
            return a if _v(ma) <= _v(mb) else b
        if op == "max":
            return a if _v(ma) >= _v(mb) else b
        if op == "pow":
            if isinstance(mb, DualReal) and mb.has_tangent() or _v(b.var) != 0.0:
                raise UnsupportedOpError("smooth exponent under smooth interpretation")
            e = _v(mb)
            m = ma ** e
            if self.correlated:
                return GaussianVal(m, self._tvar(m))
            base = self._p(ma)
            d = e * base ** (e - 1) if e != 1 else 1.0
            return GaussianVal(m, d * d * a.var)
        raise UnsupportedOpError(f"unknown op {op!r}")

    def unary(self, op, a):
        ma = a.mean
        if op == "neg":
            return GaussianVal(-ma, a.var)
        if op == "exp":
            m = ma.exp() if isinstance(ma, DualReal) else math.exp(ma)
            d = self._p(m)
        elif op == "log":
            if _v(ma) <= 0:
                raise AdNumericError("log", f"argument {_v(ma)!r} not positive")
            m = ma.log() if isinstance(ma, DualReal) else math.log(ma)
            d = 1.0 / self._p(ma)
        elif op == "sqrt":
            if _v(ma) < 0:
                raise AdNumericError("sqrt", f"argument {_v(ma)!r} negative")
            m = ma.sqrt() if isinstance(ma, DualReal) else math.sqrt(ma)
            d = 0.5 / self._p(m) if _v(m) > 0 else 0.0
        elif op == "sin":
            m = ma.sin() if isinstance(ma, DualReal) else math.sin(ma)
            d = ma.cos() if self.diff_var and isinstance(ma, DualReal) else math.cos(_v(ma))
        elif op == "cos":
            m = ma.cos() if isinstance(ma, DualReal) else math.cos(ma)
            d = -ma.sin() if self.diff_var and isinstance(ma, DualReal) else -math.sin(_v(ma))
        elif op == "tanh":
            m = ma.tanh() if isinstance(ma, DualReal) else math.tanh(ma)
            pm = self._p(m)
            d = 1.0 - pm * pm
        elif op == "sigmoid":
            m = ma.sigmoid() if isinstance(ma, DualReal) else _sigmoid(ma)
            pm = self._p(m)
            d = pm * (1.0 - pm)
        else:
            raise UnsupportedOpError(f"unknown unary op {op!r}")
        if self.correlated:
            return GaussianVal(m, self._tvar(m))
        return GaussianVal(m, d * d * a.var)


def si_arith(op, a, b=None, *, mode="independent", diff_var=False, sigma2=None):
    """Propagate Gaussians through one operation (``b`` is None for unary ops)."""
    ar = _Arith(mode, diff_var, sigma2)
    if b is None:
        return ar.unary(op, a)
    return ar.binary(op, a, b)


# -- merging and restriction ----------------------------------------------------

def _moment_distance(sa, sb):
    # shared GaussianVal objects contribute nothing; the item-view difference
    # finds the rest without a Python-level loop over the whole store
    d = 0.0
    for k, ga in sa.items() - sb.items():
        gb = sb.get(k)
        if gb is None:
            continue
        dm = _v(ga.mean) - _v(gb.mean)
        ds = math.sqrt(max(_v(ga.var), 0.0)) - math.sqrt(max(_v(gb.var), 0.0))
        d += dm * dm + ds * ds
    return d


def merge_paths(p, q, diff_var=False):
    """Moment-matched union of two paths; variables missing on either side are dropped."""
    wa, wb = p.weight, q.weight
    w = wa + wb
    wv = _v(w)
    if wv == 0.0:
        # two massless paths: keep the first
        return PathState(w, dict(p.store))
    alpha = wa / w
    beta = wb / w
    av, bv = _v(alpha), _v(beta)
    sa, sb = p.store, q.store
    if len(sb) < len(sa):
        sa, sb = sb, sa
        alpha, beta, av, bv = beta, alpha, bv, av
    out = {}
    for k, ga in sa.items():
        gb = sb.get(k)
        if gb is None:
            continue
        if gb is ga or (identical(ga.mean, gb.mean) and identical(ga.var, gb.var)):
            out[k] = ga
            continue
        ma, mb = ga.mean, gb.mean
        m = alpha * ma + beta * mb
        if diff_var:
            da = ma - m
            db = mb - m
            var = alpha * (ga.var + da * da) + beta * (gb.var + db * db)
            if _v(var) < 0.0:
                var = 0.0
        else:
            mv = _v(m)
            da = _v(ma) - mv
            db = _v(mb) - mv
            var = av * (_v(ga.var) + da * da) + bv * (_v(gb.var) + db * db)
            if var < 0.0:
                var = 0.0
        out[k] = GaussianVal(m, var)
    return PathState(w, out)


class _MomentTable:
    """Per-path means and standard deviations over the variables that differ.

    Variables holding the same object in every path contribute nothing to a
    moment distance, so only the rest is tabulated; pair costs then reduce to
    vector arithmetic.
    """

    def __init__(self, paths):
        first = paths[0].store
        keys = set()
        for p in paths[1:]:
            st = p.store
            keys.update(k for k, _ in first.items() - st.items())
            keys.update(st.keys() - first.keys())
        self.keys = sorted(keys)

    def row(self, path):
        st = path.store
        nan = math.nan
        gs = [st.get(k) for k in self.keys]
        m = np.array([nan if g is None else _v(g.mean) for g in gs], dtype=float)
        var = np.array([nan if g is None else _v(g.var) for g in gs], dtype=float)
        return m, np.sqrt(np.maximum(var, 0.0))

    @staticmethod
    def distance(ra, rb):
        dm = ra[0] - rb[0]
        ds = ra[1] - rb[1]
        both = ~np.isnan(dm)
        return float(np.sum(dm[both] ** 2 + ds[both] ** 2))


def _restrict_ch(paths, target, diff_var, scaled=True):
    table = _MomentTable(paths)
    alive = {i: p for i, p in enumerate(paths)}
    rows = {i: table.row(p) for i, p in alive.items()}
    nxt = len(paths)

    def cost(i, j):
        c = table.distance(rows[i], rows[j])
        if scaled:
            wp, wq = _v(alive[i].weight), _v(alive[j].weight)
            s = wp + wq
            c = c * (wp * wq / s) if s > 0 else 0.0
        return c

    heap = []
    keys = list(alive)
    for a in range(len(keys)):
        for b in range(a + 1, len(keys)):
            heap.append((cost(keys[a], keys[b]), keys[a], keys[b]))
    heapq.heapify(heap)
    while len(alive) > target:
        _, i, j = heapq.heappop(heap)
        if i not in alive or j not in alive:
            continue
        r = merge_paths(alive.pop(i), alive.pop(j), diff_var)
        del rows[i], rows[j]
        k = nxt
        nxt += 1
        alive[k] = r
        rows[k] = table.row(r)
        for l in alive:
            if l != k:
                heapq.heappush(heap, (cost(l, k), l, k))
    return list(alive.values())


def _restrict_iw(paths, target, diff_var):
    cur = list(paths)
    while len(cur) > target:
        best = None
        for a in range(len(cur)):
            for b in range(a + 1, len(cur)):
                c = _moment_distance(cur[a].store, cur[b].store)
                if best is None or c < best[0]:
                    best = (c, a, b)
        _, a, b = best
        merged = merge_paths(cur[a], cur[b], diff_var)
        cur[a] = merged
        del cur[b]
    return cur


def _restrict_wo(paths, target, diff_var):
    cur = list(paths)
    while len(cur) > target:
        order = sorted(range(len(cur)), key=lambda i: _v(cur[i].weight))
        a, b = sorted(order[:2])
        cur[a] = merge_paths(cur[a], cur[b], diff_var)
        del cur[b]
    return cur


def _restrict_di(paths, target):
    order = sorted(range(len(paths)), key=lambda i: -_v(paths[i].weight))
    keep = sorted(order[:target])
    total = paths[0].weight
    for p in paths[1:]:
        total = total + p.weight
    kept = paths[keep[0]].weight
    for i in keep[1:]:
        kept = kept + paths[i].weight
    if _v(kept) == 0.0:
        return [paths[i] for i in keep]
    factor = total / kept
    return [PathState(paths[i].weight * factor, paths[i].store) for i in keep]


def restrict(paths, rcfg, target=None, diff_var=False):
    """Reduce ``paths`` to at most ``target`` (default ``rcfg.max_paths``) paths."""
    if not paths:
        raise ValueError("restrict needs at least one path")
    target = rcfg.max_paths if target is None else target
    if len(paths) <= target:
        return list(paths)
    s = rcfg.strategy
    if s == "ch":
        return _restrict_ch(paths, target, diff_var)
    if s == "iw":
        return _restrict_iw(paths, target, diff_var)
    if s == "wo":
        return _restrict_wo(paths, target, diff_var)
    return _restrict_di(paths, target)


# -- handles --------------------------------------------------------------------

class SiVar:
    """Handle of a smooth value that lives in every active path's store."""

    __slots__ = ("eng", "id")

    def __init__(self, eng, vid):
        self.eng = eng
        self.id = vid

    def __del__(self):
        eng = self.eng
        if eng is not None:
            eng.live.discard(self.id)
            eng.dead += 1

    def __add__(self, o):
        return self.eng.binop("+", self, o)

    def __radd__(self, o):
        return self.eng.binop("+", o, self)

    def __sub__(self, o):
        return self.eng.binop("-", self, o)

    def __rsub__(self, o):
        return self.eng.binop("-", o, self)

    def __mul__(self, o):
        return self.eng.binop("*", self, o)

    def __rmul__(self, o):
        return self.eng.binop("*", o, self)

    def __truediv__(self, o):
        return self.eng.binop("/", self, o)

    def __rtruediv__(self, o):
        return self.eng.binop("/", o, self)

    def __pow__(self, o):
        return self.eng.binop("pow", self, o)

    def __neg__(self):
        return self.eng.unop("neg", self)

    def __pos__(self):
        return self

    def __abs__(self):
        raise UnsupportedOpError("abs on a smooth value; express the kink with a branch")

    def exp(self):
        return self.eng.unop("exp", self)

    def log(self):
        return self.eng.unop("log", self)

    def sqrt(self):
        return self.eng.unop("sqrt", self)

    def sin(self):
        return self.eng.unop("sin", self)

    def cos(self):
        return self.eng.unop("cos", self)

    def tanh(self):
        return self.eng.unop("tanh", self)

    def sigmoid(self):
        return self.eng.unop("sigmoid", self)

    def minimum(self, o):
        return self.eng.binop("min", self, o)

    def maximum(self, o):
        return self.eng.binop("max", self, o)

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
        raise SmoothUsageError("a smooth value is a distribution, not a float")

    def __repr__(self):
        return f"SiVar(#{self.id})"


class SiState:
    """Named slots whose writes go to every active path."""

    __slots__ = ("_eng", "_slots")

    def __init__(self, eng, init):
        object.__setattr__(self, "_eng", eng)
        object.__setattr__(self, "_slots", {})
        for name, v in init.items():
            sid = eng.new_slot(v)
            self._slots[name] = sid

    def __getattr__(self, name):
        try:
            sid = self._slots[name]
        except KeyError:
            raise AttributeError(name) from None
        return self._eng.snapshot(sid)

    def __setattr__(self, name, v):
        try:
            sid = self._slots[name]
        except KeyError:
            raise SmoothUsageError(
                f"state field {name!r} was not declared; pass it to ctx.state()") from None
        self._eng.assign(sid, v)

    def __del__(self):
        eng = self._eng
        if eng is not None:
            for sid in self._slots.values():
                eng.live.discard(sid)


class SiArray:
    __slots__ = ("_eng", "_ids", "__weakref__")

    def __init__(self, eng, values):
        self._eng = eng
        self._ids = [eng.new_slot(v) for v in values]

    def __len__(self):
        return len(self._ids)

    def __getitem__(self, i):
        return self._eng.snapshot(self._ids[i])

    def __setitem__(self, i, v):
        self._eng.assign(self._ids[i], v)

    def __iter__(self):
        for sid in self._ids:
            yield self._eng.snapshot(sid)

    def __del__(self):
        eng = self._eng
        if eng is not None:
            for sid in self._ids:
                eng.live.discard(sid)


# -- engine ------------------------------------------------------------------------

@dataclass
class SiStats:
    branches: int = 0
    split_paths: int = 0
    max_paths: int = 1
    dropped_mass: float = 0.0
    restricts: int = 0

    @property
    def effective_paths(self):
        """Average number of paths alive right after a split."""
        return self.split_paths / self.branches if self.branches else 1.0


class SiContext(ExecContext):
    """Execution context for smooth interpretation."""

    backend = "dgsi"

    def __init__(self, n, sigma, rcfg, *, variance_mode="independent",
                 differentiable_variance=False, max_iter=DEFAULT_MAX_ITER):
        super().__init__(n, max_iter)
        self.ad = AdContext(n)
        self.rcfg = rcfg
        self.threshold = rcfg.weight_threshold
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
        self.sigma2 = sigma * sigma
        self.diff_var = differentiable_variance
        self.arith = _Arith(variance_mode, differentiable_variance, self.sigma2)
        self.stack = SiStack([PathState(1.0, {})])
        self.live = set()
        self.dead = 0
        self._next = 0
        self.stats = SiStats()

    # -- store plumbing -------------------------------------------------

    def _new_id(self):
        vid = self._next
        self._next = vid + 1
        self.live.add(vid)
        return vid

    def _gauss(self, x):
        if isinstance(x, _NUM):
            return GaussianVal(float(x), 0.0)
        raise SmoothUsageError(f"cannot use {type(x).__name__} as a smooth operand")

    def _get(self, st, x):
        try:
            return st[x.id]
        except KeyError:
            raise SmoothUsageError(
                "value undefined on an active path; keep branch-written state in ctx.state/ctx.array"
            ) from None

    def inputs(self, x):
        handles = []
        root = self.stack.top
        for i, v in enumerate(x):
            vid = self._new_id()
            g = GaussianVal(make_input(self.ad, i, float(v)), float(self.sigma2[i]))
            for p in root:
                p.store[vid] = g
            handles.append(SiVar(self, vid))
        return handles

    def new_slot(self, v):
        vid = self._new_id()
        self.assign(vid, v)
        return vid

    def assign(self, vid, v):
        if isinstance(v, SiVar):
            self._check_owner(v)
            for p in self.stack.top:
                st = p.store
                st[vid] = self._get(st, v)
        else:
            g = self._gauss(v)
            for p in self.stack.top:
                p.store[vid] = g

    def snapshot(self, vid):
        new = self._new_id()
        for p in self.stack.top:
            st = p.store
            st[new] = st[vid]
        return SiVar(self, new)

    def _check_owner(self, h):
        if h.eng is not self:
            raise SmoothUsageError("handle belongs to a different execution")

    def binop(self, op, a, b):
        ar = self.arith
        ga = gb = None
        if isinstance(a, SiVar):
            self._check_owner(a)
        else:
            ga = self._gauss(a)
        if isinstance(b, SiVar):
            self._check_owner(b)
        else:
            gb = self._gauss(b)
        new = self._new_id()
        seen = {}
        for p in self.stack.top:
            st = p.store
            xa = ga if ga is not None else self._get(st, a)
            xb = gb if gb is not None else self._get(st, b)
            # paths sharing both operands share the result
            key = (id(xa), id(xb))
            r = seen.get(key)
            if r is None:
                r = seen[key] = ar.binary(op, xa, xb)
            st[new] = r
        return SiVar(self, new)

    def unop(self, op, a):
        self._check_owner(a)
        ar = self.arith
        new = self._new_id()
        seen = {}
        for p in self.stack.top:
            st = p.store
            xa = self._get(st, a)
            r = seen.get(id(xa))
            if r is None:
                r = seen[id(xa)] = ar.unary(op, xa)
            st[new] = r
        return SiVar(self, new)

    def state(self, **init):
        return SiState(self, init)

    def array(self, values):
        return SiArray(self, values)

    def _purge(self, paths):
        live = self.live
        for p in paths:
            st = p.store
            if len(st) > len(live):
                p.store = {k: v for k, v in st.items() if k in live}

    # -- control flow ---------------------------------------------------

    def _margin(self, st, a, b):
        ga = self._get(st, a) if isinstance(a, SiVar) else self._gauss(a)
        gb = self._get(st, b) if isinstance(b, SiVar) else self._gauss(b)
        return self.arith.binary("-", ga, gb)

    def _restrict_top(self, target):
        top = self.stack.top
        if len(top) > target:
            if self.dead > len(self.live):
                self._purge(top)
                self.dead = 0
            top = restrict(top, self.rcfg, target, self.diff_var)
            self.stack.replace_top(top)
            self.stats.restricts += 1
        return top

    def _split(self, cond):
        """Split the top scope on ``cond``; returns (true-set, false-set)."""
        a, b = cond.operands()
        for h in (a, b):
            if isinstance(h, SiVar):
                self._check_owner(h)
        active = self._restrict_top(self.rcfg.branch_target)
        if self.dead > 2 * len(self.live) + 64:
            self._purge(active)
            self.dead = 0
        thr = self.threshold
        tset, fset = [], []
        dropped = 0.0
        for p in active:
            B = self._margin(p.store, a, b)
            q = prob_le_zero(B.mean, B.var)
            w = p.weight
            if isinstance(q, float) and (q == 1.0 or q == 0.0):
                (tset if q == 1.0 else fset).append(p)
                continue
            qc = prob_le_zero(-B.mean, B.var)
            wt = w * q
            wf = w * qc
            vt, vf = _v(wt), _v(wf)
            keep_t = vt > 0.0 and vt >= thr
            keep_f = vf > 0.0 and vf >= thr
            if not keep_t:
                dropped += vt
            if not keep_f:
                dropped += vf
            if keep_t and keep_f:
                tset.append(PathState(wt, dict(p.store)))
                fset.append(PathState(wf, p.store))
            elif keep_t:
                tset.append(PathState(wt, p.store))
            elif keep_f:
                fset.append(PathState(wf, p.store))
        st = self.stats
        st.branches += 1
        st.dropped_mass += dropped
        n = len(tset) + len(fset)
        st.split_paths += n
        if n > st.max_paths:
            st.max_paths = n
        if n == 0:
            raise EmptyStateError("every path fell below the weight threshold")
        return tset, fset

    def _finish(self, paths):
        if len(paths) > self.rcfg.max_paths:
            paths = restrict(paths, self.rcfg, None, self.diff_var)
            self.stats.restricts += 1
        self.stack.replace_top(paths)

    def _run_scope(self, paths, body):
        if not paths:
            return []
        if body is None:
            return paths
        self.stack.push(paths)
        depth = self.stack.depth
        body()
        if self.stack.depth != depth:
            raise SmoothUsageError("scope nesting violated inside a branch body")
        return self.stack.pop()

    def branch(self, cond, then, else_=None, site=None):
        if isinstance(cond, (bool, np.bool_)):
            body = then if cond else else_
            if body is not None:
                body()
            return
        if not isinstance(cond, Condition):
            raise SmoothUsageError(f"branch condition of type {type(cond).__name__}")
        tset, fset = self._split(cond)
        out = self._run_scope(tset, then)
        out = out + self._run_scope(fset, else_)
        self._finish(out)

    def loop(self, cond_fn, body, site=None, max_iter=None):
        cap = self.max_iter if max_iter is None else max_iter
        exited = []
        it = 0
        while True:
            cond = cond_fn()
            if isinstance(cond, (bool, np.bool_)):
                if not cond:
                    exited.extend(self.stack.top)
                    break
                cont = self.stack.top
            elif isinstance(cond, Condition):
                cont, out = self._split(cond)
                exited.extend(out)
                if len(exited) > self.rcfg.max_paths:
                    exited = restrict(exited, self.rcfg, None, self.diff_var)
                    self.stats.restricts += 1
            else:
                raise SmoothUsageError(f"loop condition of type {type(cond).__name__}")
            if not cont:
                break
            it += 1
            if it > cap:
                raise RunawayLoopError(f"loop exceeded {cap} iterations")
            self.stack.replace_top(cont)
            body()
        if not exited:
            raise EmptyStateError("no path left the loop above the weight threshold")
        self._finish(exited)

    # -- results ---------------------------------------------------------

    def total_weight(self):
        tot = 0.0
        for p in self.stack.top:
            tot += _v(p.weight)
        return tot

    def expectation(self, y):
        acc = 0.0
        if isinstance(y, SiVar):
            self._check_owner(y)
            for p in self.stack.top:
                acc = acc + p.weight * self._get(p.store, y).mean
        else:
            for p in self.stack.top:
                acc = acc + p.weight * float(y)
        if isinstance(acc, DualReal):
            return GradResult(acc.value, acc.gradient())
        return GradResult(float(acc), np.zeros(self.n))


def si_execute(program, x, sigma, rcfg=None, *, seed=0, variance_mode="independent",
               differentiable_variance=False):
    """Smoothed expectation and gradient of ``program`` at ``x``."""
    rcfg = rcfg or RestrictConfig()
    n = program_dim(program)
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ConfigError(f"expected {n} inputs, got shape {x.shape}")
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
    if (sig < 0).any():
        raise ConfigError("sigma must be non-negative")
    ctx = SiContext(n, sig, rcfg, variance_mode=variance_mode,
                    differentiable_variance=differentiable_variance)
    y = program(ctx, ctx.inputs(x), make_rng(seed))
    res = ctx.expectation(y)
    st = ctx.stats
    res.info.update(paths=len(ctx.stack.top), total_weight=ctx.total_weight(),
                    min_weight=min(_v(p.weight) for p in ctx.stack.top),
                    dropped_mass=st.dropped_mass, max_paths=st.max_paths,
                    branches=st.branches, effective_paths=st.effective_paths,
                    restricts=st.restricts, stack_depth=ctx.stack.depth)
    return res
