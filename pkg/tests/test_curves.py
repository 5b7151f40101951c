import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minpace.curves import (C_BOUND, FAMILIES, CurveDomainError, CurveParams, curve_slope, eval_curve,
                            inv_softplus, normalized_sigmoid, softplus)

# high-precision reference values (mpmath, 50 digits)
NS_B1_C0_A1 = 0.50039874287452161
EVAL_A2_B1_C0_A1 = 1.0007974857490432

params = st.builds(
    CurveParams,
    a=st.floats(0.01, 100),
    b=st.floats(0.05, 5),
    c=st.floats(-5, 5),
)


def test_normalized_sigmoid_zero():
    assert normalized_sigmoid(1, 0, 0.0) == 0.0


def test_normalized_sigmoid_saturates():
    assert abs(normalized_sigmoid(1, 0, 1e12) - 1) < 1e-9


def test_normalized_sigmoid_reference_value():
    assert normalized_sigmoid(1, 0, 1.0) == pytest.approx(NS_B1_C0_A1, rel=1e-13)


@pytest.mark.parametrize("b,eps,alpha", [(0, 1e-3, 1), (-1, 1e-3, 1), (1, 0, 1), (1, 1e-3, -0.1)])
def test_normalized_sigmoid_domain(b, eps, alpha):
    with pytest.raises(CurveDomainError):
        normalized_sigmoid(b, 0, alpha, eps)


def test_eval_curve_examples():
    p = CurveParams(2, 1, 0)
    assert eval_curve(p, 0) == 0
    assert eval_curve(p, 1) == pytest.approx(EVAL_A2_B1_C0_A1, rel=1e-13)
    assert abs(eval_curve(p, 1e12) - 2) < 1e-8 * 2


def test_slope_matches_finite_difference():
    p = CurveParams(1, 1, 0)
    h = 1e-5
    fd = (p(1 + h) - p(1 - h)) / (2 * h)
    assert curve_slope(p, 1.0) == pytest.approx(fd, rel=1e-6)


def test_slope_positive_on_log_grid():
    p = CurveParams(1, 1, 0)
    assert np.all(p.slope(np.geomspace(1e-3, 1e3, 100)) > 0)


def test_doubling_a_doubles_slope():
    assert curve_slope(CurveParams(2, 1.3, 0.4), 0.7) == pytest.approx(2 * curve_slope(CurveParams(1, 1.3, 0.4), 0.7))


def test_slope_needs_positive_alpha():
    with pytest.raises(CurveDomainError):
        curve_slope(CurveParams(1, 1, 0), 0.0)


def test_invalid_params_rejected():
    with pytest.raises(CurveDomainError):
        CurveParams(0, 1, 0)
    with pytest.raises(CurveDomainError):
        CurveParams(1, -1, 0)
    with pytest.raises(CurveDomainError):
        CurveParams(1, 1, 0, family="cubic")


def test_deep_lower_tail_stays_accurate():
    # Phi(b log eps + c) is tiny here; the normaliser must not round to 1
    p = CurveParams(1, 3, 12)
    assert 0 < p(1e-6) < p(1e-5) < 1


def test_softplus_is_overflow_safe():
    assert softplus(1000.0) == 1000.0
    assert softplus(-1000.0) >= 0
    assert inv_softplus(softplus(3.0)) == pytest.approx(3.0)


def test_json_round_trip():
    p = CurveParams(1.5, 0.7, -2.0, eps=1e-4)
    d = p.to_dict()
    assert set(d) == {"a", "b", "c", "eps"}
    assert CurveParams.from_dict(d) == p


@given(params)
@settings(max_examples=200, deadline=None)
def test_boundary_exact(p):
    assert p(0.0) == 0.0


@given(params, st.floats(0, 1e3), st.floats(1e-3, 1e3))
@settings(max_examples=200, deadline=None)
def test_strictly_increasing(p, a1, gap):
    a2 = a1 + gap
    lo, hi = p(a1), p(a2)
    assert lo <= hi
    # strict wherever the true increment is above float resolution
    if p.slope(a2) * gap > 4 * np.spacing(p.a):
        assert lo < hi


@given(params, st.floats(1e-2, 1e2))
@settings(max_examples=200, deadline=None)
def test_slope_agrees_with_central_difference(p, alpha):
    h = 1e-5 * alpha
    fd = (p(alpha + h) - p(alpha - h)) / (2 * h)
    s = p.slope(alpha)
    # the difference quotient cannot resolve better than a few ulps of a over 2h
    rounding = 8 * np.spacing(p.a) / (2 * h)
    assert abs(s - fd) <= 1e-5 * abs(s) + rounding


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-100, 100))
def test_raw_mapping_always_valid(ra, rb, rc):
    p = CurveParams.from_raw(ra, rb, rc)
    assert p.a > 0 and p.b > 0 and abs(p.c) <= C_BOUND


@pytest.mark.parametrize("family", FAMILIES)
def test_every_family_is_monotone_from_zero(family):
    p = CurveParams(1.2, 0.8, 0.3, family=family)
    xs = np.linspace(0, 5, 200)
    ys = p(xs)
    assert ys[0] == 0
    assert np.all(np.diff(ys) >= 0)
    fd = (p(1.0 + 1e-6) - p(1.0 - 1e-6)) / 2e-6
    assert p.slope(1.0) == pytest.approx(fd, rel=1e-5)
