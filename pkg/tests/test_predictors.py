import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minpace.curves import CurveParams
from minpace.market import HETEROGENEOUS, UNIFORM, CampaignConfig, EpisodeState, aggregate_response, \
    generate_campaign, run_tick
from minpace.predictors import (ConvergenceError, ErrorSpec, FitError, FittedPredictor, IdentifiabilityError,
                                OraclePredictor, ResponseBundle, fit_bundle, fit_bundle_detailed, fit_loss,
                                oracle_predict)
from minpace.records import TickRecord
from minpace.theory import exact_bundle


def campaign(profile=UNIFORM, T=6, seed=1):
    return generate_campaign(CampaignConfig(1.0, 1.0, T, seed=seed), profile)


def grid_for(gt):
    return np.linspace(0, 1.5 * gt.saturation_alpha(), 256)


def test_oracle_zero_error_reproduces_aggregate():
    gt = campaign()
    b = oracle_predict(gt, 2)
    I, C, V = aggregate_response(gt, 2)
    xs = grid_for(gt)
    assert b.traffic == I
    assert np.max(np.abs(b.cost(xs) - C(xs))) <= 1e-4
    assert np.max(np.abs(b.value(xs) - V(xs))) <= 1e-4


def test_oracle_traffic_offset_exact():
    gt = campaign()
    b = oracle_predict(gt, 1, ErrorSpec(eps_I=100, sign="inflate"))
    assert b.traffic == aggregate_response(gt, 1)[0] + 100


def test_oracle_curve_offset_sup_norm():
    gt = campaign(HETEROGENEOUS)
    b = oracle_predict(gt, 1, ErrorSpec(eps_C=0.01, sign="inflate"))
    _, C, _ = aggregate_response(gt, 1)
    xs = grid_for(gt)
    assert np.max(np.abs(b.cost(xs) - C(xs))) == pytest.approx(0.01, abs=1e-6)


def test_oracle_parametric_surfaces_family_mismatch():
    # quadratic market cost is outside the log-sigmoid family at this tolerance
    with pytest.raises(FitError):
        oracle_predict(campaign(), 1, parametric=True)


def test_oracle_rejects_nonpositive_traffic():
    gt = campaign(T=1)
    with pytest.raises(ValueError):
        oracle_predict(gt, 1, ErrorSpec(eps_I=1e9, sign="deflate"))


def test_error_spec_validation_and_signs():
    with pytest.raises(ValueError):
        ErrorSpec(eps_C=-1)
    with pytest.raises(ValueError):
        ErrorSpec(sign="sideways")
    assert ErrorSpec(sign="adverse").signs() == (-1.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        ErrorSpec(sign="random").signs()


@given(st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0, 500), st.sampled_from(["inflate", "deflate", "adverse",
                                                                                   "random"]), st.integers(0, 100))
@settings(max_examples=100, deadline=None)
def test_oracle_error_calibration(eps_c, eps_v, eps_i, sign, seed):
    gt = campaign(HETEROGENEOUS, seed=3)
    b = oracle_predict(gt, 1, ErrorSpec(eps_c, eps_v, eps_i, sign), np.random.default_rng(seed))
    I, C, V = aggregate_response(gt, 1)
    xs = grid_for(gt)
    assert np.max(np.abs(b.cost(xs) - C(xs))) == pytest.approx(eps_c, abs=1e-6)
    assert np.max(np.abs(b.value(xs) - V(xs))) == pytest.approx(eps_v, abs=1e-6)
    assert abs(b.traffic - I) == pytest.approx(eps_i, abs=1e-6)


def recs_from(curve_c, curve_v, alphas, I=100):
    return [TickRecord(k + 1, float(a), I, I * float(curve_c(a)), I * float(curve_v(a))) for k, a in enumerate(alphas)]


def test_fit_loss_zero_on_perfect_fit():
    c, v = CurveParams(1, 1, 0), CurveParams(2, 0.5, 1)
    recs = recs_from(c, v, [0.5, 1, 2])
    assert fit_loss(ResponseBundle(300, c, v), recs, 0.1, true_I=300) == 0


def test_fit_loss_traffic_term():
    c, v = CurveParams(1, 1, 0), CurveParams(2, 0.5, 1)
    recs = recs_from(c, v, [0.5])
    assert fit_loss(ResponseBundle(math.e * 100, c, v), recs, 0.1, true_I=100) == pytest.approx(0.1, rel=1e-14)


def test_fit_loss_hand_computed():
    c, v = CurveParams(1, 1, 0), CurveParams(1, 1, 0)
    recs = [TickRecord(1, 1.0, 4, 4 * (c(1.0) - 0.5), 4 * v(1.0)),
            TickRecord(2, 2.0, 9, 9 * c(2.0), 9 * (v(2.0) + 0.25))]
    # (1/2) * [4 * 0.5^2 + 9 * 0.25^2]
    expected = 0.5 * (4 * 0.25 + 9 * 0.0625)
    assert fit_loss(ResponseBundle(13, c, v), recs) == pytest.approx(expected, rel=1e-12)


def test_fit_loss_domain():
    c = CurveParams(1, 1, 0)
    with pytest.raises(ValueError):
        fit_loss(ResponseBundle(10, c, c), [SimpleNamespace(I=0, alpha=1.0, cost=0.0, value=0.0)])
    with pytest.raises(ValueError):
        ResponseBundle(0, c, c)


def test_traffic_weight_raises_gradient_contribution():
    c, v = CurveParams(1, 1, 0), CurveParams(1, 1, 0)
    base = [TickRecord(1, 1.0, 10, 10 * (c(1.0) + 0.1), 10 * v(1.0))]
    heavy = [TickRecord(1, 1.0, 20, 20 * (c(1.0) + 0.1), 20 * v(1.0))]

    def grad_a(recs):
        h = 1e-6
        lo = fit_loss(ResponseBundle(1, CurveParams(1 - h, 1, 0), v), recs)
        hi = fit_loss(ResponseBundle(1, CurveParams(1 + h, 1, 0), v), recs)
        return abs(hi - lo) / (2 * h)

    assert grad_a(heavy) > grad_a(base)


def test_fit_recovers_known_params():
    truth_c, truth_v = CurveParams(2.0, 1.5, -0.5), CurveParams(0.8, 0.9, 0.7)
    alphas = np.exp(np.linspace(-2, 2, 8))
    recs = recs_from(truth_c, truth_v, alphas)
    fit = fit_bundle_detailed(recs, 1, M=64, rng=np.random.default_rng(0))
    assert fit.loss < 1e-8
    for got, want in ((fit.bundle.cost, truth_c), (fit.bundle.value, truth_v)):
        assert got.a == pytest.approx(want.a, rel=1e-3)
        assert got.b == pytest.approx(want.b, rel=1e-3)
        assert abs(got.c - want.c) <= 1e-3 * max(abs(want.c), 1)


def test_fit_single_alpha_is_unidentifiable():
    recs = recs_from(CurveParams(1, 1, 0), CurveParams(1, 1, 0), [1.0] * 8)
    with pytest.raises(IdentifiabilityError):
        fit_bundle(recs, 1)


def test_fit_needs_future_records():
    recs = recs_from(CurveParams(1, 1, 0), CurveParams(1, 1, 0), [0.5, 1.0, 2.0])
    with pytest.raises(IdentifiabilityError):
        fit_bundle(recs, 9)


def heterogeneous_log(seed, T=12):
    gt = generate_campaign(CampaignConfig(1.0, 1.0, T, seed=seed), HETEROGENEOUS)
    rng, state, recs = np.random.default_rng(seed), EpisodeState(), []
    for t in range(1, T + 1):
        a = float(rng.uniform(0.1, 1.5) * gt.saturation_alpha())
        o = run_tick(gt, state, a)
        state.record(a, o)
        recs.append(TickRecord(t, a, o.opportunities, o.cost, o.value))
    return gt, recs


@pytest.mark.parametrize("seed", range(5))
def test_fit_beats_true_aggregate_on_its_samples(seed):
    gt, recs = heterogeneous_log(seed)
    fit = fit_bundle_detailed(recs, 1, rng=np.random.default_rng(1), strict=False)
    assert fit_loss(fit.bundle, fit.samples) <= fit_loss(exact_bundle(gt, 1), fit.samples)


def test_fit_strict_raises_when_optimum_runs_away():
    gt, recs = heterogeneous_log(0)
    with pytest.raises(ConvergenceError):
        fit_bundle_detailed(recs, 1, rng=np.random.default_rng(1), max_iter=5)
    fit = fit_bundle_detailed(recs, 1, rng=np.random.default_rng(1), max_iter=5, strict=False)
    assert not fit.converged and math.isfinite(fit.loss)


def test_fit_is_deterministic():
    _, recs = heterogeneous_log(2)
    f1 = fit_bundle_detailed(recs, 1, rng=np.random.default_rng(4), strict=False)
    f2 = fit_bundle_detailed(recs, 1, rng=np.random.default_rng(4), strict=False)
    assert f1.to_dict() == f2.to_dict()


def test_fitted_predictor_carries_last_fit_to_the_tail():
    _, recs = heterogeneous_log(3, T=6)
    pred = FittedPredictor(recs, M=8, seed=1, max_iter=50)
    b1 = pred(1)
    tail = pred(6)
    assert 6 in pred.carried
    assert tail.traffic == recs[-1].I
    assert tail.cost is b1.cost and tail.value is b1.value


def test_oracle_predictor_is_callable():
    gt = campaign()
    assert OraclePredictor(gt)(3).traffic == aggregate_response(gt, 3)[0]


def test_bundle_json_round_trip():
    b = ResponseBundle(12.5, CurveParams(1, 2, 3), CurveParams(4, 5, -6))
    assert ResponseBundle.from_dict(b.to_dict()) == b
