import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothgrad.ad import AdContext, DualReal, binary_op, get_gradient, identical, make_input, unary_op
from smoothgrad.condition import Condition
from smoothgrad.errors import AdNumericError, SmoothUsageError, UnsupportedOpError


def inp(n, i, v, **kw):
    return make_input(AdContext(n, **kw), i, v)


@pytest.mark.parametrize("n,i,v,tan", [
    (2, 0, 3.5, [1, 0]),
    (1, 0, 0.0, [1]),
    (3, 2, -1.0, [0, 0, 1]),
])
def test_make_input_seeds_unit_tangent(n, i, v, tan):
    a = inp(n, i, v)
    assert a.value == v
    assert get_gradient(a).tolist() == tan


def test_make_input_rejects_bad_index():
    with pytest.raises(IndexError):
        make_input(AdContext(2), 2, 1.0)


def test_binary_rules():
    ctx = AdContext(2)
    x0, x1 = make_input(ctx, 0, 2.0), make_input(ctx, 1, 1.0)
    p = binary_op("×", x0, ctx.constant(3.0))
    assert (p.value, get_gradient(p).tolist()) == (6.0, [3.0, 0.0])
    s = binary_op("+", make_input(ctx, 0, 1.0), x1)
    assert (s.value, get_gradient(s).tolist()) == (2.0, [1.0, 1.0])
    q = binary_op("÷", make_input(ctx, 0, 1.0), 2.0)
    assert (q.value, get_gradient(q).tolist()) == (0.5, [0.5, 0.0])


@pytest.mark.parametrize("op,v,out,tan", [
    ("exp", 0.0, 1.0, 1.0),
    ("log", 1.0, 0.0, 1.0),
    ("sqrt", 4.0, 2.0, 0.25),
])
def test_unary_rules(op, v, out, tan):
    r = unary_op(op, inp(1, 0, v))
    assert (r.value, get_gradient(r).tolist()) == (out, [tan])


def test_gradient_of_constant_input_and_square():
    ctx = AdContext(2)
    assert get_gradient(ctx.constant(5.0)).tolist() == [0.0, 0.0]
    assert get_gradient(make_input(ctx, 0, 1.0)).tolist() == [1.0, 0.0]
    x = inp(1, 0, 3.0)
    assert get_gradient(x * x).tolist() == [6.0]


def test_abs_and_unknown_ops_are_rejected():
    with pytest.raises(UnsupportedOpError):
        unary_op("abs", inp(1, 0, 1.0))
    with pytest.raises(UnsupportedOpError):
        abs(inp(1, 0, 1.0))
    with pytest.raises(UnsupportedOpError):
        binary_op("%", inp(1, 0, 1.0), 2.0)


def test_domain_errors():
    with pytest.raises(AdNumericError):
        unary_op("log", inp(1, 0, 0.0))
    with pytest.raises(AdNumericError):
        inp(1, 0, 1.0) / inp(1, 0, 0.0)
    with pytest.raises(AdNumericError):
        unary_op("sqrt", inp(1, 0, -1.0))


def test_comparisons_build_conditions_without_truth_value():
    x = inp(1, 0, 1.0)
    c = x <= 0.0
    assert isinstance(c, Condition)
    assert c.margin().value == 1.0
    with pytest.raises(SmoothUsageError):
        bool(c)
    with pytest.raises(SmoothUsageError):
        x == 1.0


def test_sparse_tangent_promotes_on_second_index():
    ctx = AdContext(3)
    a, b = make_input(ctx, 0, 1.0), make_input(ctx, 2, 2.0)
    assert a.nnz_hint == 1
    assert (a * 2.0).nnz_hint == 1
    c = a * b
    assert c.is_dense
    assert get_gradient(c).tolist() == [2.0, 0.0, 1.0]


def test_identical():
    ctx = AdContext(2)
    a = make_input(ctx, 0, 1.0)
    assert identical(a, make_input(ctx, 0, 1.0))
    assert not identical(a, make_input(ctx, 1, 1.0))
    assert not identical(a, 1.0)
    assert identical(2.0, 2.0)


# -- properties ------------------------------------------------------------------

UNARY = ["exp", "sin", "cos", "tanh", "sigmoid", "neg"]
BINARY = ["+", "-", "*", "/"]

ops = st.lists(
    st.tuples(st.sampled_from(UNARY + BINARY), st.integers(0, 2),
              st.floats(0.5, 2.0), st.integers(0, 2)),
    min_size=1, max_size=8)
points = st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3)


def compose(spec, xs):
    """Fold ``spec`` over three inputs; works on floats and DualReals alike."""
    def f(v, name):
        if name == "neg":
            return -v
        if isinstance(v, DualReal):
            return unary_op(name, v)
        return {"exp": math.exp, "sin": math.sin, "cos": math.cos, "tanh": math.tanh,
                "sigmoid": lambda z: 1 / (1 + math.exp(-z))}[name](v)

    acc = xs[0]
    for name, j, c, k in spec:
        other = xs[j] * c + 0.25 * k
        if name in UNARY:
            acc = f(acc, name) + other
        elif name == "/":
            acc = acc / (2.5 + f(other, "sin"))
        elif name == "+":
            acc = acc + other
        elif name == "-":
            acc = acc - other
        else:
            acc = acc * f(other, "tanh")
        acc = f(acc, "tanh") * 3.0
    return acc


@settings(max_examples=100, deadline=None)
@given(ops, points)
def test_gradient_matches_central_differences(spec, x):
    ctx = AdContext(3)
    y = compose(spec, [make_input(ctx, i, v) for i, v in enumerate(x)])
    g = get_gradient(y)
    h = 1e-6
    for i in range(3):
        up, dn = list(x), list(x)
        up[i] += h
        dn[i] -= h
        fd = (compose(spec, up) - compose(spec, dn)) / (2 * h)
        assert abs(g[i] - fd) <= 1e-6 * max(1.0, abs(fd)) + 1e-7


@settings(max_examples=50, deadline=None)
@given(ops, points)
def test_sparse_and_dense_paths_agree_bitwise(spec, x):
    a = AdContext(3)
    b = AdContext(3, force_dense=True)
    ya = compose(spec, [make_input(a, i, v) for i, v in enumerate(x)])
    yb = compose(spec, [make_input(b, i, v) for i, v in enumerate(x)])
    assert ya.value == yb.value
    assert np.array_equal(get_gradient(ya), get_gradient(yb))


@settings(max_examples=50, deadline=None)
@given(ops, points)
def test_pool_reuse_never_aliases_live_values(spec, x):
    ctx = AdContext(3, force_dense=True, poison=True)
    xs = [make_input(ctx, i, v) for i, v in enumerate(x)]
    keep = [compose(spec, xs) for _ in range(3)]
    ref = get_gradient(compose(spec, [make_input(AdContext(3), i, v) for i, v in enumerate(x)]))
    for y in keep:
        assert np.all(np.isfinite(get_gradient(y)))
        assert np.array_equal(get_gradient(y), ref)
