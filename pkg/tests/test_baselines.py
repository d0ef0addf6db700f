import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothgrad.api import SmoothProgram
from smoothgrad.baselines import (EstimatorConfig, crisp_batch, crisp_run, ipa_estimate, perturbations,
                                  pgo_estimate, rf_estimate)
from smoothgrad.errors import ConfigError
from smoothgrad.problems import Heaviside, Synthetic

from oracles import heaviside_smoothed

LINE = SmoothProgram(1, lambda ctx, x, rng: x[0] * 3.0)
IDENTITY = SmoothProgram(1, lambda ctx, x, rng: x[0] * 1.0)
CONST = SmoothProgram(2, lambda ctx, x, rng: 4.0)


def test_crisp_runs():
    assert crisp_run(Heaviside(), [0.5]) == 1.0
    assert crisp_run(Heaviside(), [-0.5]) == 0.0
    assert crisp_run(LINE, [2.0]) == 6.0


def test_batched_crisp_matches_scalar():
    X = np.random.default_rng(1).normal(size=(40, 2))
    p = Synthetic(4)
    assert crisp_batch(p, X).tolist() == [crisp_run(p, x) for x in X]


def test_ipa_misses_the_step():
    for x in (-0.7, 0.0, 0.4):
        res = ipa_estimate(Heaviside(), [x], EstimatorConfig("ipa", samples=100, sigma=0.25))
        assert np.all(res.info["pathwise"] == 0.0)
        assert res.gradient.tolist() == [0.0]


def test_ipa_exact_on_a_line_and_at_zero_sigma():
    assert ipa_estimate(LINE, [1.0], EstimatorConfig("ipa", samples=10, sigma=0.3)).gradient.tolist() == [3.0]
    p = Synthetic(4)
    many = ipa_estimate(p, [0.1, 0.2], EstimatorConfig("ipa", samples=5, sigma=0.0))
    from smoothgrad.api import run_ad
    assert many.gradient.tolist() == run_ad(p, [0.1, 0.2])[1].tolist()


def test_pgo_on_identity_has_unit_slope():
    res = pgo_estimate(IDENTITY, [0.7], EstimatorConfig("pgo", samples=10_000, sigma=0.5, seed=3))
    assert abs(res.gradient[0] - 1.0) <= 3 * res.stderr[0]


def test_pgo_on_constant_is_exactly_zero():
    res = pgo_estimate(CONST, [0.0, 1.0], EstimatorConfig("pgo", samples=100, sigma=0.5))
    assert res.gradient.tolist() == [0.0, 0.0]


def test_rf_on_constant_matches_mean_of_directions():
    cfg = EstimatorConfig("rf", samples=1000, sigma=0.5, seed=2)
    res = rf_estimate(CONST, [0.0, 1.0], cfg)
    U = perturbations(2, cfg)
    assert res.gradient.tolist() == pytest.approx((4.0 / 0.5 * U).mean(axis=0).tolist(), rel=1e-12)


def test_rf_on_identity_has_unit_slope():
    res = rf_estimate(IDENTITY, [0.3], EstimatorConfig("rf", samples=20_000, sigma=0.5, seed=5))
    assert abs(res.gradient[0] - 1.0) <= 3 * res.stderr[0]


def test_pgo_recovers_smoothed_heaviside_slope():
    res = pgo_estimate(Heaviside(), [0.0], EstimatorConfig("pgo", samples=500_000, sigma=0.25, seed=0))
    assert abs(res.gradient[0] - heaviside_smoothed(0.0, 0.25)[1]) <= 3 * res.stderr[0]


def test_rf_is_noisier_than_pgo_on_heaviside():
    # at 0 the step is symmetric and both have the same spread; away from it only RF pays for P(x)
    pgo = pgo_estimate(Heaviside(), [0.5], EstimatorConfig("pgo", samples=10_000, sigma=0.25))
    rf = rf_estimate(Heaviside(), [0.5], EstimatorConfig("rf", samples=10_000, sigma=0.25))
    assert rf.stderr[0] > 2 * pgo.stderr[0]


def test_shared_seed_shares_directions():
    a = perturbations(3, EstimatorConfig("pgo", samples=7, seed=11))
    b = perturbations(3, EstimatorConfig("rf", samples=7, seed=11))
    assert np.array_equal(a, b)


def test_config_validation():
    with pytest.raises(ConfigError):
        EstimatorConfig("pgo", sigma=0.0)
    with pytest.raises(ConfigError):
        EstimatorConfig("rf", sigma=[0.1, 0.2])
    with pytest.raises(ConfigError):
        EstimatorConfig("dgo")
    with pytest.raises(ConfigError):
        EstimatorConfig("ipa", samples=0)


# -- properties ------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.05, 2.0),
       st.integers(1, 300))
def test_rf_minus_pgo_is_the_baseline_term(seed, x0, x1, sigma, S):
    p = Synthetic(4)
    rf = rf_estimate(p, [x0, x1], EstimatorConfig("rf", samples=S, sigma=sigma, seed=seed))
    pgo = pgo_estimate(p, [x0, x1], EstimatorConfig("pgo", samples=S, sigma=sigma, seed=seed))
    base = crisp_run(p, [x0, x1])
    u_mean = perturbations(2, EstimatorConfig("pgo", samples=S, sigma=sigma, seed=seed)).mean(axis=0)
    expected = base / sigma * u_mean
    # the two means are summed in a different order, so allow rounding of the larger terms
    scale = np.abs(rf.gradient) + np.abs(pgo.gradient) + abs(expected).max()
    assert np.all(np.abs((rf.gradient - pgo.gradient) - expected) <= 1e-12 * (scale + 1))


@pytest.mark.parametrize("kind", ["pgo", "rf"])
def test_affine_program_gradient_within_three_standard_errors(kind):
    prog = SmoothProgram(2, lambda ctx, x, rng: x[0] * 2.0 - x[1] * 0.5 + 1.0)
    est = pgo_estimate if kind == "pgo" else rf_estimate
    res = est(prog, [0.4, -1.0], EstimatorConfig(kind, samples=100_000, sigma=0.3, seed=9))
    assert np.all(np.abs(res.gradient - [2.0, -0.5]) <= 3 * res.stderr)
    assert math.isfinite(res.expectation)
