import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optexec.impact import (
    LevyEffectiveImpact,
    LinearImpact,
    MarginalNotInvertibleError,
    MixedPowerImpact,
    QuadraticImpact,
    ShiftedConvexImpact,
    impact_from_config,
    validate_s_shape,
)

ALL_INVERTIBLE = [
    QuadraticImpact(1.0),
    MixedPowerImpact(alpha=1.0, p_convex=2.0, p_concave=0.5, threshold=1.0),
    MixedPowerImpact(alpha=0.7, p_convex=3.0, p_concave=0.4, threshold=0.5),
    MixedPowerImpact(alpha=1.0, p_convex=2.0, p_concave=0.5, threshold=0.0),
    ShiftedConvexImpact(power=3.0, threshold=1.0),
    LevyEffectiveImpact(gamma=1.0, alpha0=1.0, alpha1=1.0, beta1=1.0),
]


def test_mixed_power_matching_constants():
    m = MixedPowerImpact(alpha=1.0, p_convex=2.0, p_concave=0.5, threshold=1.0)
    assert m.beta == 4.0
    assert m.gamma == 3.0


def test_mixed_power_zero_threshold_is_pure_power():
    m = MixedPowerImpact(alpha=1.0, p_convex=2.0, p_concave=0.5, threshold=0.0)
    assert m.beta == 0.0
    assert m.gamma == 0.0
    assert m.g(3.0) == pytest.approx(9.0, abs=0.0)


@pytest.mark.parametrize("threshold", [0.25, 1.0, 2.7])
def test_mixed_power_c1_matching_at_threshold(threshold):
    m = MixedPowerImpact(alpha=1.3, p_convex=2.5, p_concave=0.6, threshold=threshold)
    g_concave = m.beta * threshold**m.p_concave
    g_convex = m.alpha * threshold**m.p_convex + m.gamma
    assert g_concave == pytest.approx(g_convex, abs=1e-10)
    h_concave = m.beta * m.p_concave * threshold ** (m.p_concave - 1.0)
    h_convex = m.alpha * m.p_convex * threshold ** (m.p_convex - 1.0)
    assert h_concave == pytest.approx(h_convex, abs=1e-10)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(alpha=0.0, p_convex=2.0, p_concave=0.5, threshold=1.0),
        dict(alpha=1.0, p_convex=1.0, p_concave=0.5, threshold=1.0),
        dict(alpha=1.0, p_convex=2.0, p_concave=1.0, threshold=1.0),
        dict(alpha=1.0, p_convex=2.0, p_concave=0.0, threshold=1.0),
        dict(alpha=1.0, p_convex=2.0, p_concave=0.5, threshold=-0.1),
    ],
)
def test_mixed_power_rejects_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        MixedPowerImpact(**kwargs)


def test_curve_values():
    q = QuadraticImpact(1.0)
    assert q.g(0.0) == 0.0
    assert q.h(3.0) == 6.0

    m = MixedPowerImpact(alpha=1.0, p_convex=2.0, p_concave=0.5, threshold=1.0)
    assert m.g(2.0) == pytest.approx(7.0, abs=0.0)  # alpha*4 + gamma
    assert m.h(0.25) == pytest.approx(4.0, abs=0.0)  # beta * 0.5 * 0.25**-0.5

    sc = ShiftedConvexImpact(power=3.0, threshold=1.0)
    assert sc.g(0.5) == 0.0
    assert sc.h(0.5) == 0.0
    assert sc.h(1.0) == 0.0  # one-sided derivative at the threshold

    lv = LevyEffectiveImpact(gamma=1.0, alpha0=1.0, alpha1=1.0, beta1=1.0)
    assert lv.h(1e-9) == pytest.approx(0.0, abs=1e-8)  # marginal vanishes at 0


def test_domain_errors():
    q = QuadraticImpact(1.0)
    with pytest.raises(ValueError):
        q.g(-1.0)
    with pytest.raises(ValueError):
        q.h(0.0)
    with pytest.raises(ValueError):
        q.excess_impact(-2.0)


def test_h_inverse_closed_forms():
    q = QuadraticImpact(1.0)
    assert q.h_inverse(4.0) == 2.0

    m = MixedPowerImpact(alpha=1.0, p_convex=2.0, p_concave=0.5, threshold=1.0)
    # value at the branch point is the threshold itself
    assert m.h_inverse(m.h(1.0)) == 1.0
    with pytest.raises(ValueError):
        m.h_inverse(0.5 * m.marginal_floor)

    sc = ShiftedConvexImpact(power=3.0, threshold=1.0)
    assert sc.h_inverse(0.0) == 1.0


def test_h_inverse_bisection_residual():
    lv = LevyEffectiveImpact(gamma=1.0, alpha0=1.0, alpha1=1.0, beta1=1.0)
    for ybar in (0.3, 5.0, 120.0):
        x = lv.h_inverse(ybar)
        assert abs(lv.h(x) - ybar) <= 1e-12 * (1.0 + ybar)


def test_linear_family_flagged():
    lin = LinearImpact(2.0)
    assert not lin.unbounded_marginal
    assert lin.excess_impact(0.7) == 0.0
    with pytest.raises(MarginalNotInvertibleError):
        lin.h_inverse(1.0)


def test_excess_impact_values():
    q = QuadraticImpact(1.0)
    assert q.excess_impact(0.5) == pytest.approx(0.25, abs=0.0)
    sc = ShiftedConvexImpact(power=3.0, threshold=1.0)
    assert sc.excess_impact(1.0) == 0.0


def test_excess_nonpositive_at_threshold():
    for m in ALL_INVERTIBLE:
        if m.threshold > 0.0:
            assert m.excess_impact(m.threshold) <= 0.0


@given(
    lo=st.floats(min_value=0.01, max_value=5.0),
    gap=st.floats(min_value=1e-3, max_value=20.0),
)
@settings(max_examples=60, deadline=None)
def test_excess_growth_inequality(lo, gap):
    # for x > y > threshold: excess(x) - excess(y) >= (h(x) - h(y)) * y > 0
    for m in ALL_INVERTIBLE:
        y = m.threshold + lo
        x = y + gap
        lhs = m.excess_impact(x) - m.excess_impact(y)
        rhs = (m.h(x) - m.h(y)) * y
        assert lhs >= rhs - 1e-10 * (1.0 + abs(rhs))
        assert lhs > 0.0


@given(x=st.floats(min_value=1e-6, max_value=1e3))
@settings(max_examples=80, deadline=None)
def test_h_inverse_roundtrip(x):
    for m in ALL_INVERTIBLE:
        xq = m.threshold + x
        back = m.h_inverse(m.h(xq))
        assert back == pytest.approx(xq, rel=1e-10, abs=1e-10)


@given(x=st.floats(min_value=0.05, max_value=30.0))
@settings(max_examples=60, deadline=None)
def test_marginal_matches_finite_difference(x):
    for m in ALL_INVERTIBLE:
        span_lo = m.threshold / 2.0 if m.threshold > 0 else 0.05
        xq = span_lo + x * (10.0 * m.threshold + 10.0 - span_lo) / 30.0
        step = 1e-7 * max(xq, 1.0)
        fd = (m.g(xq + step) - m.g(xq - step)) / (2.0 * step)
        assert m.h(xq) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_levy_effective_convexity():
    lv = LevyEffectiveImpact(gamma=1.0, alpha0=1.0, alpha1=1.0, beta1=1.0)
    xs = np.linspace(0.01, 10.0, 400)
    step = 1e-4
    second = (lv.g(xs + step) - 2.0 * lv.g(xs) + lv.g(xs - step)) / step**2
    assert (second >= -1e-9).all()


def test_levy_effective_rejects_nonconvex_parameters():
    with pytest.raises(ValueError):
        LevyEffectiveImpact(gamma=0.1, alpha0=1.0, alpha1=1.0, beta1=1.0)


def test_small_trade_cost_vanishes():
    for m in ALL_INVERTIBLE:
        x = 1e-8
        assert x * m.h(x) < 1e-2


def test_validate_s_shape_reports():
    assert validate_s_shape(QuadraticImpact(1.0)).passed
    assert validate_s_shape(
        MixedPowerImpact(alpha=1.0, p_convex=2.0, p_concave=0.5, threshold=1.0)
    ).passed
    assert validate_s_shape(ShiftedConvexImpact(power=3.0, threshold=1.0)).passed

    rep = validate_s_shape(LinearImpact(2.0))
    assert not rep.passed
    # constant marginal: neither strictly increasing nor divergent
    assert rep.failed_names() == ["v_shaped_marginal", "diverging_marginal"]
    assert "FAIL" in str(rep)


def test_validate_s_shape_locates_marginal_minimum():
    m = MixedPowerImpact(alpha=1.0, p_convex=2.0, p_concave=0.5, threshold=1.0)
    grid = np.logspace(-4, 2, 200)
    rep = validate_s_shape(m, grid)
    assert rep.passed
    hv = m.h(grid)
    assert grid[np.argmin(hv)] == pytest.approx(1.0, rel=0.1)


def test_vectorized_evaluation_matches_scalar():
    m = MixedPowerImpact(alpha=1.0, p_convex=2.0, p_concave=0.5, threshold=1.0)
    xs = np.array([0.2, 1.0, 3.5])
    assert np.array_equal(m.g(xs), np.array([m.g(float(v)) for v in xs]))
    assert np.array_equal(m.h(xs), np.array([m.h(float(v)) for v in xs]))


def test_config_round_trip():
    for m in ALL_INVERTIBLE + [LinearImpact(0.3)]:
        again = impact_from_config(m.to_config())
        assert type(again) is type(m)
        assert again.params() == m.params()


def test_config_rejects_unknown():
    with pytest.raises(ValueError):
        impact_from_config({"family": "cubic"})
    with pytest.raises(ValueError):
        impact_from_config({"family": "quadratic", "alpha0": "1.0", "zeta": "2"})
    with pytest.raises(ValueError):
        impact_from_config({"alpha0": "1.0"})
