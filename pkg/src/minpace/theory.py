"""Brute-force checks of the single-multiplier gap, min-pacing exactness and
the violation bounds under forecast error, on small synthetic instances."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .controller import Constraints, min_pacing_step, psi_is_monotone, run_episode, solve_cpa_alpha
from .market import (FLUID, HETEROGENEOUS, UNIFORM, CampaignConfig, GroundTruth, aggregate_response, generate_campaign,
                     presaturation_range, true_tick_curves)
from .curves import CurveParams
from .predictors import ADVERSE, ErrorSpec, OraclePredictor, ResponseBundle

MAX_ENUMERATION = 10**7
HARNESS_TOL = 1e-12


class SizeLimitError(ValueError):
    pass


def harmonic_factor(traffic):
    """``sum_t I_t / I_{t:T}``."""
    traffic = np.asarray(traffic, dtype=float)
    remaining = np.cumsum(traffic[::-1])[::-1]
    return math.fsum(traffic / remaining)


def largest_admissible_grid(depth, max_points=32, limit=MAX_ENUMERATION):
    g = max_points
    while g > 2 and g**depth > limit:
        g -= 1
    return g


def _tick_tables(gt, t, grid):
    """Per-tick totals I_k C_k and I_k V_k on the grid, shape (ticks, grid)."""
    sl = slice(t - 1, None)
    v, m, p = gt.value_scale[sl, None], gt.comp_cap[sl, None], gt.conv_rate[sl, None]
    I = gt.traffic[sl, None].astype(float)
    bid = np.minimum(np.asarray(grid)[None, :] * v, m)
    return I * bid * bid / (2 * m), I * p * bid / m


def brute_force_trajectory_opt(gt: GroundTruth, t, grid, remaining_budget, target_cpa, cpa_slack,
                               limit=MAX_ENUMERATION):
    """Exhaustive per-tick grid search over ticks t..T.

    Returns ``(best total value, best alpha sequence)``; ties go to the
    lexicographically smallest index sequence.
    """
    grid = np.asarray(grid, dtype=float)
    depth = gt.horizon - t + 1
    size = len(grid) ** depth
    if size > limit:
        raise SizeLimitError(f"{len(grid)}^{depth} = {size} grid assignments exceeds {limit}")
    cost, value = _tick_tables(gt, t, grid)
    psi = cost - target_cpa * value
    tot_c = np.zeros(())
    tot_v = np.zeros(())
    tot_p = np.zeros(())
    for k in range(depth):
        shape = (1,) * k + (len(grid),) + (1,) * (depth - k - 1)
        tot_c = tot_c + cost[k].reshape(shape)
        tot_v = tot_v + value[k].reshape(shape)
        tot_p = tot_p + psi[k].reshape(shape)
    feasible = (tot_c <= remaining_budget) & (tot_p <= cpa_slack)
    if not feasible.any():
        raise ValueError("no feasible trajectory on this grid")
    masked = np.where(feasible, tot_v, -np.inf).ravel()
    j = int(np.argmax(masked))
    idx = np.unravel_index(j, feasible.shape)
    return float(masked[j]), grid[list(idx)]


def exact_bundle(gt, t):
    remaining, cost, value = aggregate_response(gt, t)
    return ResponseBundle(remaining, cost, value)


def single_alpha_grid_opt(bundle, constraints, target_cpa, grid):
    """Best single alpha on a grid: the largest feasible point with maximal value."""
    grid = np.asarray(grid, dtype=float)
    feas = (bundle.total_cost(grid) <= constraints.remaining_budget) & (
        bundle.psi(grid, target_cpa) <= constraints.cpa_slack)
    if not feas.any():
        return None, None
    vals = np.where(feas, bundle.total_value(grid), -np.inf)
    j = len(grid) - 1 - int(np.argmax(vals[::-1]))
    return float(grid[j]), float(vals[j])


@dataclass
class GapReport:
    opt_trajectory: float
    opt_single_alpha: float
    opt_single_alpha_grid: float
    gap: float
    sigma_sq: float
    bound: float
    gamma: float
    alpha_star: float
    lambda_eff: float
    dual_scale: float
    c_slope_max: float
    grid_tol: float
    active: str
    inconclusive: bool = False
    trajectory: list = field(default_factory=list)

    @property
    def holds(self):
        """Bound satisfied (vacuously true when the curvature estimate failed)."""
        return self.inconclusive or self.gap <= self.bound * (1 + 1e-9) + 1e-9 * abs(self.opt_single_alpha)

    def to_dict(self):
        d = asdict(self)
        d["holds"] = self.holds
        return d


def efficiency_dispersion(gt, t, alpha):
    """Traffic-weighted variance of per-tick V'/C' around the aggregate ratio at ``alpha``.

    Ticks whose cost slope vanishes at ``alpha`` are left out.
    """
    remaining, cost, value = aggregate_response(gt, t)
    lam = value.slope(alpha) / cost.slope(alpha)
    sl = slice(t - 1, None)
    I = gt.traffic[sl].astype(float)
    e = []
    w = []
    for k in range(t, gt.horizon + 1):
        ck, vk = true_tick_curves(gt, k)
        cs = ck.slope(alpha)
        if cs > 0:
            e.append(vk.slope(alpha) / cs - lam)
            w.append(I[k - t])
    e, w = np.array(e), np.array(w)
    return float(np.sum(w * e * e) / np.sum(w)), lam


def _estimate_gamma(gt, t, lam, alpha_star, action_range, window=0.2, n=41):
    lo = max(action_range[0], (1 - window) * alpha_star)
    hi = min(action_range[1], (1 + window) * alpha_star)
    xs = np.linspace(lo, hi, n)
    step = xs[1] - xs[0]
    gammas = []
    for k in range(t, gt.horizon + 1):
        ck, vk = true_tick_curves(gt, k)
        h = vk(xs) - lam * ck(xs)
        second = (h[2:] - 2 * h[1:-1] + h[:-2]) / step**2
        gammas.append(np.min(-second))
    return float(min(gammas))


def gap_check(gt: GroundTruth, t, grid, constraints: Constraints, config: CampaignConfig) -> GapReport:
    """Compare the brute-force trajectory optimum with the single-alpha optimum.

    The single-alpha optimum is solved exactly with min-pacing on the true
    aggregate curves; the trajectory side is a grid lower bound, so the
    reported gap never overstates the true gap.
    """
    tau = config.target_cpa
    bundle = exact_bundle(gt, t)
    dec = min_pacing_step(bundle, constraints, config, rel_tol=HARNESS_TOL)
    a_star = dec.alpha_t
    opt_single = float(bundle.total_value(a_star))
    opt_traj, seq = brute_force_trajectory_opt(gt, t, grid, constraints.remaining_budget, tau, constraints.cpa_slack)
    _, single_grid = single_alpha_grid_opt(bundle, constraints, tau, grid)

    sigma_sq, lam = efficiency_dispersion(gt, t, a_star)
    c_slope, v_slope = bundle.cost.slope(a_star), bundle.value.slope(a_star)
    mu = 0.0
    active = "none"
    if a_star < config.alpha_high:
        if dec.alpha_B <= dec.alpha_C and not dec.budget_unbinding:
            active = "budget"
        elif not dec.cpa_slack_unbinding:
            denom = c_slope - tau * v_slope
            if denom > 0:
                active = "cpa"
                mu = v_slope / denom
            else:
                active = "budget-fallback"
    dual_scale = 1.0 + mu * tau
    gamma = _estimate_gamma(gt, t, lam, a_star, config.action_range)
    c_max = max(true_tick_curves(gt, k)[0].slope(a_star) for k in range(t, gt.horizon + 1))
    remaining = bundle.traffic
    inconclusive = not gamma > 0
    bound = math.inf if inconclusive else dual_scale * c_max**2 * remaining * sigma_sq / (2 * gamma)

    grid = np.asarray(grid, dtype=float)
    cell = float(np.max(np.diff(grid))) if len(grid) > 1 else 0.0
    _, value_tab = _tick_tables(gt, t, grid)
    vmax_slope = np.max(np.abs(np.diff(value_tab, axis=1)) / np.diff(grid), axis=1) if len(grid) > 1 else 0.0
    grid_tol = float(np.sum(vmax_slope) * cell)
    return GapReport(opt_traj, opt_single, single_grid, opt_traj - opt_single, sigma_sq, bound, gamma, a_star, lam,
                     dual_scale, c_max, grid_tol, active, inconclusive, list(map(float, seq)))


def exactness_check(bundle, constraints: Constraints, config: CampaignConfig, grid_n=2048, rel_tol=1e-6):
    """True iff min-pacing lands within one grid cell of the feasibility-grid argmax of value."""
    lo, hi = config.action_range
    grid = np.linspace(lo, hi, grid_n)
    dec = min_pacing_step(bundle, constraints, config, rel_tol)
    best, _ = single_alpha_grid_opt(bundle, constraints, config.target_cpa, grid)
    if best is None:
        best = lo
    cell = (hi - lo) / (grid_n - 1)
    return abs(dec.alpha_t - best) <= cell * (1 + 1e-9)


# ---------------------------------------------------------------------------
# violation bounds


def error_ladder(levels=(0.0, 0.005, 0.01, 0.02), *, curves=True, traffic=0.0, sign=ADVERSE):
    """ErrorSpecs with ``eps_C = eps_V = level`` (or traffic-only when ``curves`` is false)."""
    out = []
    for e in levels:
        if curves:
            out.append(ErrorSpec(e, e, traffic, sign))
        else:
            out.append(ErrorSpec(0.0, 0.0, e, sign))
    return out


@dataclass
class BoundConstants:
    rho: float
    rho_psi: float
    L_C: float
    C_slope_min: float
    L_psi: float
    psi_slope_min: float
    C_max: float
    psi_max: float
    H_I: float
    total_traffic: float


def violation_constants(gt: GroundTruth, config: CampaignConfig, n=512) -> BoundConstants:
    """Slope and range constants over the action range, every anchor tick."""
    tau = config.target_cpa
    grid = np.linspace(*config.action_range, n)
    v, m, p = gt.value_scale[:, None], gt.comp_cap[:, None], gt.conv_rate[:, None]
    I = gt.traffic[:, None].astype(float)
    live = grid[None, :] * v < m
    bid = np.minimum(grid[None, :] * v, m)
    c = bid * bid / (2 * m)
    val = p * bid / m
    dc = np.where(live, grid[None, :] * v * v / m, 0.0)
    dv = np.where(live, p * v / m, 0.0)

    def suffix_avg(x):
        num = np.cumsum((I * x)[::-1], axis=0)[::-1]
        den = np.cumsum(I[::-1], axis=0)[::-1]
        return num / den

    agg_c, agg_dc = suffix_avg(c), suffix_avg(dc)
    agg_psi, agg_dpsi = suffix_avg(c - tau * val), suffix_avg(dc - tau * dv)
    L_C = float(dc.max())
    cmin = float(agg_dc.min())
    L_psi = float(np.abs(dc - tau * dv).max())
    pmin = float(agg_dpsi.min())
    return BoundConstants(
        rho=L_C / cmin if cmin > 0 else math.inf,
        rho_psi=L_psi / pmin if pmin > 0 else math.inf,
        L_C=L_C,
        C_slope_min=cmin,
        L_psi=L_psi,
        psi_slope_min=pmin,
        C_max=float(agg_c.max()),
        psi_max=float(np.abs(agg_psi).max()),
        H_I=harmonic_factor(gt.traffic),
        total_traffic=float(gt.traffic.sum()),
    )


def violation_bounds(k: BoundConstants, err: ErrorSpec, target_cpa):
    e_c, e_v, e_i = err.eps_C, err.eps_V, err.eps_I
    budget = k.rho * (k.total_traffic * e_c + e_i * k.C_max * k.H_I + e_i * e_c * k.H_I) if (e_c or e_i) else 0.0
    e_psi = e_c + target_cpa * e_v
    cpa = k.rho_psi * (k.total_traffic * e_psi + e_i * k.psi_max * k.H_I + e_i * e_psi * k.H_I) if (e_psi or e_i) else 0.0
    return budget, cpa


CSV_COLUMNS = ("eps_C", "eps_V", "eps_I", "overshoot_budget", "overshoot_cpa", "bound_budget", "bound_cpa", "H_I")


@dataclass
class ViolationReport:
    rows: list
    constants: BoundConstants
    action_range: tuple
    note: str = ""

    @property
    def H_I(self):
        return self.constants.H_I

    def within_bounds(self):
        return all(r["overshoot_budget"] <= r["bound_budget"] and r["overshoot_cpa"] <= r["bound_cpa"]
                   for r in self.rows)

    def to_dict(self):
        return {"rows": self.rows, "constants": asdict(self.constants), "action_range": list(self.action_range),
                "note": self.note, "within_bounds": self.within_bounds()}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([f"{r[c]:.9g}" for c in CSV_COLUMNS])
        return buf.getvalue()


def violation_sweep(gt: GroundTruth, config: CampaignConfig, eps_ladder, mode=FLUID) -> ViolationReport:
    """Run min-pacing with each forecast error and compare overshoot with the bounds.

    Overshoot is measured against the initial budget and an initial CPA
    slack of zero.  The bound constants are measured on ``config``'s action
    range, which should sit below every tick's saturation point.
    """
    if mode != FLUID:
        raise ValueError("violation sweeps run in fluid mode only")
    consts = violation_constants(gt, config)
    rows = []
    for err in eps_ladder:
        res = run_episode(OraclePredictor(gt, err, seed=config.seed), gt, config, FLUID)
        b_bound, c_bound = violation_bounds(consts, err, config.target_cpa)
        rows.append({
            "eps_C": err.eps_C, "eps_V": err.eps_V, "eps_I": err.eps_I, "sign": err.sign,
            "overshoot_budget": res.budget_overshoot, "overshoot_cpa": res.cpa_overshoot,
            "bound_budget": b_bound, "bound_cpa": c_bound, "H_I": consts.H_I,
            "total_cost": res.total_cost, "total_value": res.total_value,
        })
    note = f"constants measured on action range [{config.alpha_low:.6g}, {config.alpha_high:.6g}]"
    return ViolationReport(rows, consts, config.action_range, note)


# ---------------------------------------------------------------------------
# instance generators used by the CLI, the acceptance suite and the demos


def gap_instance(seed, horizon=4, profile=HETEROGENEOUS, spread=0.5):
    """Small campaign with a random budget and a CPA target that binds on some seeds.

    The action range is the pre-saturation band of the market, so every
    grid point sits where the tick curves are strictly increasing.
    """
    rng = np.random.default_rng([int(seed), 11])
    cfg = CampaignConfig(1.0, 1.0, horizon, seed=int(seed))
    gt = generate_campaign(cfg, profile, spread=spread)
    lo, hi = presaturation_range(gt, 0.05, 0.95)
    I, C, V = aggregate_response(gt, 1)
    budget = rng.uniform(0.2, 0.8) * I * C(hi)
    a_tgt = rng.uniform(0.3, 1.0) * hi
    tau = C(a_tgt) / V(a_tgt) * rng.uniform(0.8, 1.5)
    cfg = cfg.replace(budget=float(budget), target_cpa=float(tau), alpha_low=float(lo), alpha_high=float(hi))
    return gt, cfg


def violation_instance(seed, horizon=48, profile=HETEROGENEOUS):
    """Budget-binding fluid campaign for the forecast-error sweep.

    ``tau`` is set low enough that predicted ``Psi`` is increasing over the
    whole action range, and the budget is lowered until the budget root sits
    strictly below the CPA root at the first tick.
    """
    cfg = CampaignConfig(1.0, 1.0, horizon, seed=int(seed))
    gt = generate_campaign(cfg, profile, value_scale=(1.5, 2.5), cap_ratio=(1.2, 1.5), spread=0.2)
    hi = 0.95 * gt.saturation_alpha()
    lo = 0.4 * hi
    I = gt.traffic.astype(float)
    v, m, p = gt.value_scale, gt.comp_cap, gt.conv_rate
    num = np.cumsum((I * p * v / m)[::-1])[::-1]
    den = np.cumsum((I * v * v / m)[::-1])[::-1]
    tau = 0.9 * lo / float(np.max(num / den))
    cfg = cfg.replace(target_cpa=tau, alpha_low=lo, alpha_high=hi)
    bundle = exact_bundle(gt, 1)
    a_c, _, _ = solve_cpa_alpha(bundle, tau, 0.0, cfg.action_range)
    a_budget = 0.6 * hi
    if a_budget >= 0.9 * a_c:
        a_budget = 0.5 * (lo + 0.9 * a_c) if 0.9 * a_c > lo else lo
    budget = float(bundle.total_cost(a_budget))
    return gt, cfg.replace(budget=budget)


def traffic_instance(horizon, seed=5, traffic=1000, target_cpa=100.0):
    """Uniform-traffic campaign with a slack CPA target, for traffic-error sweeps."""
    cfg = CampaignConfig(1.0, target_cpa, horizon, seed=int(seed))
    gt = generate_campaign(cfg, UNIFORM, traffic=traffic)
    hi = 0.95 * gt.saturation_alpha()
    lo = 0.05 * hi
    _, C, _ = aggregate_response(gt, 1)
    I = float(gt.traffic.sum())
    return gt, cfg.replace(alpha_low=lo, alpha_high=hi, budget=float(I * C(0.6 * hi)))


EXACT_RANGE = (0.01, 20.0)


def random_exactness_case(rng, action_range=EXACT_RANGE, max_tries=1000):
    """Random parametric bundle with monotone predicted ``Psi`` plus random constraints.

    Returns ``(bundle, constraints, config)``.  Draws are rejected until the
    slope check accepts ``Psi`` as monotone on the action range.
    """
    lo, hi = action_range
    for _ in range(max_tries):
        cost = CurveParams(rng.uniform(0.5, 5), rng.uniform(0.5, 3), rng.uniform(-2, 2))
        value = CurveParams(rng.uniform(0.5, 5), rng.uniform(0.5, 3), rng.uniform(-2, 2))
        bundle = ResponseBundle(float(rng.uniform(100, 1000)), cost, value)
        tau = float(rng.uniform(0.05, 1.0)) * cost.sup / value.sup
        if not psi_is_monotone(bundle, tau, action_range):
            continue
        budget = float(rng.uniform(0.05, 1.2)) * bundle.total_cost(hi)
        span = abs(bundle.psi(hi, tau)) + abs(bundle.psi(lo, tau))
        slack = float(rng.uniform(-0.2, 1.0)) * span
        config = CampaignConfig(budget, tau, 1, alpha_low=lo, alpha_high=hi)
        return bundle, Constraints(budget, slack), config
    raise RuntimeError("no monotone case found")
