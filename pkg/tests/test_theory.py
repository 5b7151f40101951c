import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minpace.controller import Constraints, min_pacing_step
from minpace.market import HETEROGENEOUS, UNIFORM, CampaignConfig, GroundTruth, generate_campaign
from minpace.predictors import ErrorSpec
from minpace.theory import (CSV_COLUMNS, SizeLimitError, brute_force_trajectory_opt, efficiency_dispersion,
                            error_ladder, exact_bundle, exactness_check, gap_check, gap_instance, harmonic_factor,
                            largest_admissible_grid, random_exactness_case, single_alpha_grid_opt, traffic_instance,
                            violation_instance, violation_sweep)


def harmonic(n):
    return math.fsum(1 / k for k in range(1, n + 1))


@pytest.mark.parametrize("T", [16, 48, 256])
def test_harmonic_factor_uniform(T):
    h = harmonic_factor(np.full(T, 1000))
    assert abs(h - harmonic(T)) <= 1e-12
    assert h <= 1 + math.log(T)


def test_harmonic_48_value():
    # H_48 = 4.458797175...
    assert harmonic_factor(np.ones(48)) == pytest.approx(4.4587971750641, abs=1e-12)
    assert harmonic_factor(np.ones(48)) <= 1 + math.log(48)


def test_admissible_grid():
    assert largest_admissible_grid(4) == 32
    assert 32 ** 5 > 10 ** 7 and largest_admissible_grid(5) ** 5 <= 10 ** 7
    gt = generate_campaign(CampaignConfig(1.0, 1.0, 5, seed=0), UNIFORM)
    with pytest.raises(SizeLimitError):
        brute_force_trajectory_opt(gt, 1, np.linspace(0.1, 1, 32), 1e9, 1.0, 1e9)


def test_single_tick_trajectory_is_single_alpha():
    gt, cfg = gap_instance(3)
    grid = np.linspace(cfg.alpha_low, cfg.alpha_high, 32)
    val, seq = brute_force_trajectory_opt(gt, 4, grid, cfg.budget / 4, cfg.target_cpa, 0.0)
    _, single = single_alpha_grid_opt(exact_bundle(gt, 4), Constraints(cfg.budget / 4, 0.0), cfg.target_cpa, grid)
    assert val == pytest.approx(single, rel=1e-12)


def test_uniform_trajectory_is_constant():
    gt = generate_campaign(CampaignConfig(1.0, 1.0, 4, seed=1), UNIFORM)
    grid = np.linspace(0.05, 0.95, 32) * gt.saturation_alpha()
    b = exact_bundle(gt, 1)
    budget = float(b.total_cost(grid[17])) * (1 + 1e-12)
    _, seq = brute_force_trajectory_opt(gt, 1, grid, budget, 100.0, 1e12)
    assert np.all(seq == grid[17])


@pytest.mark.parametrize("seed", range(5))
def test_restriction_inequality(seed):
    gt, cfg = gap_instance(seed)
    grid = np.linspace(cfg.alpha_low, cfg.alpha_high, 32)
    cons = Constraints(cfg.budget, 0.0)
    traj, _ = brute_force_trajectory_opt(gt, 1, grid, cfg.budget, cfg.target_cpa, 0.0)
    _, single = single_alpha_grid_opt(exact_bundle(gt, 1), cons, cfg.target_cpa, grid)
    assert traj >= single


@pytest.mark.parametrize("seed", range(5))
def test_uniform_gap_within_grid_tolerance(seed):
    gt, cfg = gap_instance(seed, profile=UNIFORM)
    rep = gap_check(gt, 1, np.linspace(cfg.alpha_low, cfg.alpha_high, 32), Constraints(cfg.budget, 0.0), cfg)
    assert rep.sigma_sq == 0
    assert rep.gap <= rep.grid_tol


@pytest.mark.parametrize("seed", range(20))
def test_heterogeneous_gap_bound(seed):
    gt, cfg = gap_instance(seed)
    rep = gap_check(gt, 1, np.linspace(cfg.alpha_low, cfg.alpha_high, 32), Constraints(cfg.budget, 0.0), cfg)
    assert rep.gap >= -rep.grid_tol
    assert rep.bound >= 0
    assert rep.holds


def test_conversion_scaling_leaves_normalised_dispersion():
    gt = generate_campaign(CampaignConfig(1.0, 1.0, 4, seed=2), HETEROGENEOUS)
    a = 0.5 * gt.saturation_alpha()
    s1, lam1 = efficiency_dispersion(gt, 1, a)
    s2, lam2 = efficiency_dispersion(gt.scaled(conv_rate=0.5), 1, a)
    # every V' and the dual ratio scale together, so e_k / lambda is unchanged
    assert lam2 == pytest.approx(0.5 * lam1, rel=1e-12)
    assert s2 / lam2 ** 2 == pytest.approx(s1 / lam1 ** 2, rel=1e-10)


@given(st.integers(0, 10_000), st.floats(0.05, 0.95))
@settings(max_examples=50, deadline=None)
def test_dispersion_nonnegative_and_zero_iff_homogeneous(seed, frac):
    cfg = CampaignConfig(1.0, 1.0, 4, seed=seed)
    het = generate_campaign(cfg, HETEROGENEOUS)
    uni = generate_campaign(cfg, UNIFORM)
    a = frac * het.saturation_alpha()
    assert efficiency_dispersion(het, 1, a)[0] > 0
    assert efficiency_dispersion(uni, 1, frac * uni.saturation_alpha())[0] == 0


def test_dispersion_zero_for_identical_efficiency():
    # different traffic and caps but identical V'/C' at every alpha: p/m and v/m ratios match
    gt = GroundTruth([10, 30], [1.0, 1.0], [0.3, 0.3], [2.0, 2.0])
    assert efficiency_dispersion(gt, 1, 0.7)[0] == 0


def test_exactness_cases():
    rng = np.random.default_rng(0)
    kinds = set()
    for _ in range(200):
        b, cons, cfg = random_exactness_case(rng)
        d = min_pacing_step(b, cons, cfg)
        kinds.add("budget" if d.alpha_B < d.alpha_C else "cpa")
        assert exactness_check(b, cons, cfg)
    assert kinds == {"budget", "cpa"}
    b, _, cfg = random_exactness_case(rng)
    both_free = Constraints(1e12, 1e12)
    assert min_pacing_step(b, both_free, cfg).alpha_t == cfg.alpha_high
    assert exactness_check(b, both_free, cfg)


def test_violation_sweep_zero_error_is_exact():
    gt, cfg = violation_instance(1000)
    rep = violation_sweep(gt, cfg, [ErrorSpec()])
    row = rep.rows[0]
    assert row["overshoot_budget"] <= 1e-9 * cfg.budget
    assert row["overshoot_cpa"] <= 1e-9 * cfg.budget


@pytest.mark.parametrize("sign", ["inflate", "adverse"])
def test_violation_bounds_hold(sign):
    for seed in range(1000, 1005):
        gt, cfg = violation_instance(seed)
        assert violation_sweep(gt, cfg, error_ladder(sign=sign)).within_bounds()


def test_inflated_forecast_never_overspends():
    gt, cfg = violation_instance(1001)
    rep = violation_sweep(gt, cfg, error_ladder(sign="inflate"))
    assert all(r["overshoot_budget"] == 0 for r in rep.rows)


def test_adverse_overshoot_roughly_linear():
    ratios = []
    for seed in range(1000, 1010):
        gt, cfg = violation_instance(seed)
        o = [r["overshoot_budget"] for r in violation_sweep(gt, cfg, error_ladder(sign="adverse")).rows]
        ratios.append(o[2] / o[1])
    assert 1.2 <= np.median(ratios) <= 2.8


def test_traffic_error_is_mild_in_horizon():
    over = {}
    for T in (16, 64, 256):
        gt, cfg = traffic_instance(T)
        rep = violation_sweep(gt, cfg, [ErrorSpec(eps_I=500, sign="adverse")])
        assert rep.within_bounds()
        over[T] = rep.rows[0]["overshoot_budget"]
    assert over[16] > 0
    # sub-linear: quadrupling the horizon twice does not come close to multiplying overshoot by 16
    assert over[256] / over[16] < 256 / 16 / 4


def test_violation_csv_schema():
    gt, cfg = violation_instance(1002)
    text = violation_sweep(gt, cfg, error_ladder(levels=(0.0, 0.01))).to_csv()
    lines = text.splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 3


def test_violation_sweep_rejects_stochastic():
    gt, cfg = violation_instance(1003)
    with pytest.raises(ValueError):
        violation_sweep(gt, cfg, [ErrorSpec()], mode="stochastic")
