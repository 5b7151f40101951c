"""Min-pacing control on predicted response bundles.

Each tick the controller solves two scalar equations on the forecast,

    I_hat * C_hat(alpha_B) = B_t                         (budget)
    I_hat * (C_hat - tau V_hat)(alpha_C) = Delta_t       (CPA)

and executes ``min(alpha_B, alpha_C)``.  :func:`run_episode` repeats this in
a receding-horizon loop against the synthetic market.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .market import FLUID, CampaignConfig, EpisodeState, GroundTruth, TickOutcome, observe_features, run_tick
from .records import TickRecord

DEFAULT_REL_TOL = 1e-6
MONOTONE_GRID = 64


class StateError(RuntimeError):
    """Episode bookkeeping went inconsistent."""


def bisection_solve(f, target, lo, hi, rel_tol=DEFAULT_REL_TOL):
    """Largest-feasible-side root of non-decreasing ``f(alpha) = target`` on [lo, hi].

    Returns ``lo`` when ``f(lo) > target`` and ``hi`` when ``f(hi) <= target``.
    Otherwise the result is the lower end of a bracket of width at most
    ``rel_tol * (hi - lo)``, so ``f(result) <= target``.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    if not rel_tol > 0:
        raise ValueError("rel_tol must be positive")
    if f(lo) > target:
        return lo
    if f(hi) <= target:
        return hi
    width = rel_tol * (hi - lo)
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class Constraints:
    remaining_budget: float
    cpa_slack: float


@dataclass(frozen=True)
class ControlDecision:
    alpha_B: float
    alpha_C: float
    alpha_t: float
    budget_unbinding: bool = False
    cpa_slack_unbinding: bool = False
    psi_nonmonotone: bool = False


def remaining_constraints(state: EpisodeState, config: CampaignConfig) -> Constraints:
    return Constraints(config.budget - state.cost, config.target_cpa * state.value - state.cost)


def solve_budget_alpha(bundle, remaining_budget, action_range, rel_tol=DEFAULT_REL_TOL):
    """Returns ``(alpha_B, budget_unbinding)``."""
    lo, hi = action_range
    if remaining_budget > bundle.traffic * bundle.cost.sup:
        return hi, True
    f = bundle.total_cost
    if remaining_budget <= f(lo):
        return lo, False
    if f(hi) <= remaining_budget:
        return hi, True
    return bisection_solve(f, remaining_budget, lo, hi, rel_tol), False


def scan_grid(action_range, n=MONOTONE_GRID):
    """Log-spaced when the range is positive (it usually spans decades), else linear."""
    lo, hi = action_range
    if lo > 0:
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def psi_is_monotone(bundle, target_cpa, action_range, n=MONOTONE_GRID):
    grid = scan_grid(action_range, n)
    slopes = np.asarray(bundle.psi_slope(grid, target_cpa))
    scale = bundle.traffic * (np.max(np.abs(bundle.cost.slope(grid))) + target_cpa * np.max(np.abs(bundle.value.slope(grid))))
    return bool(np.all(slopes >= -1e-12 * max(scale, 1e-300)))


def solve_cpa_alpha(bundle, target_cpa, cpa_slack, action_range, rel_tol=DEFAULT_REL_TOL):
    """Returns ``(alpha_C, cpa_slack_unbinding, psi_nonmonotone)``.

    Monotone ``Psi``: the root of ``Psi = cpa_slack``, clamped to the range.
    Non-monotone ``Psi``: the upper end of the first feasible interval found
    scanning upward from the bottom of the range.  If the bottom of the range
    is infeasible but an interior interval is feasible, that interval's upper
    end is used; if nothing on the scan grid is feasible, the grid point with
    the smallest ``Psi``.
    """
    lo, hi = action_range

    def psi(a):
        return bundle.psi(a, target_cpa)

    if psi_is_monotone(bundle, target_cpa, action_range):
        if psi(lo) > cpa_slack:
            return lo, False, False
        if psi(hi) <= cpa_slack:
            return hi, True, False
        return bisection_solve(psi, cpa_slack, lo, hi, rel_tol), False, False

    grid = scan_grid(action_range)
    vals = np.asarray(psi(grid))
    ok = vals <= cpa_slack
    if not ok.any():
        return float(grid[int(np.argmin(vals))]), False, True
    first = int(np.argmax(ok))
    above = np.nonzero(~ok[first:])[0]
    if len(above) == 0:
        return hi, first == 0, True
    i = first + int(above[0])
    step_tol = min(1.0, rel_tol * (hi - lo) / (grid[i] - grid[i - 1]))
    return bisection_solve(psi, cpa_slack, grid[i - 1], grid[i], step_tol), False, True


def min_pacing_step(bundle, constraints: Constraints, config: CampaignConfig, rel_tol=DEFAULT_REL_TOL):
    rng_ = config.action_range
    a_b, b_free = solve_budget_alpha(bundle, constraints.remaining_budget, rng_, rel_tol)
    a_c, c_free, nonmono = solve_cpa_alpha(bundle, config.target_cpa, constraints.cpa_slack, rng_, rel_tol)
    return ControlDecision(a_b, a_c, min(a_b, a_c), b_free, c_free, nonmono)


class MinPacing:
    """Receding-horizon min-pacing on top of a predictor ``(t, state) -> ResponseBundle``."""

    def __init__(self, predictor, rel_tol=DEFAULT_REL_TOL):
        self.predictor = predictor
        self.rel_tol = rel_tol
        self.last_bundle = None

    def decide(self, t, state, constraints, config):
        bundle = self.predictor(t, state)
        self.last_bundle = bundle
        return min_pacing_step(bundle, constraints, config, self.rel_tol)


@dataclass
class TickTrace:
    t: int
    decision: ControlDecision
    outcome: TickOutcome
    remaining_budget: float
    cpa_slack: float
    features: tuple
    predicted_cost: float | None = None
    predicted_psi: float | None = None
    stopped: bool = False

    def to_dict(self):
        d = {"t": self.t, "alpha": self.decision.alpha_t, "I": self.outcome.opportunities,
             "cost": self.outcome.cost, "value": self.outcome.value}
        d.update({k: v for k, v in asdict(self.decision).items() if k != "alpha_t"})
        d.update(remaining_budget=self.remaining_budget, cpa_slack=self.cpa_slack, stopped=self.stopped,
                 predicted_cost=self.predicted_cost, predicted_psi=self.predicted_psi)
        return d


@dataclass
class EpisodeResult:
    config: CampaignConfig
    trace: list = field(default_factory=list)

    @property
    def total_cost(self):
        return math.fsum(tr.outcome.cost for tr in self.trace)

    @property
    def total_value(self):
        return math.fsum(tr.outcome.value for tr in self.trace)

    @property
    def alphas(self):
        return np.array([tr.decision.alpha_t for tr in self.trace])

    @property
    def realized_cpa(self):
        cost, value = self.total_cost, self.total_value
        if value > 0:
            return cost / value
        return math.inf if cost > 0 else 0.0

    @property
    def budget_overshoot(self):
        return max(0.0, self.total_cost - self.config.budget)

    @property
    def cpa_overshoot(self):
        """``max(0, sum_t I_t Psi_t(alpha_t))``, the CPA constraint in additive form."""
        return max(0.0, self.total_cost - self.config.target_cpa * self.total_value)

    def records(self):
        return [TickRecord(tr.t, tr.decision.alpha_t, tr.outcome.opportunities, tr.outcome.cost, tr.outcome.value,
                           features=tr.features) for tr in self.trace]

    def summary(self):
        return {
            "total_value": self.total_value,
            "total_cost": self.total_cost,
            "realized_cpa": self.realized_cpa,
            "budget": self.config.budget,
            "target_cpa": self.config.target_cpa,
            "budget_overshoot": self.budget_overshoot,
            "cpa_overshoot": self.cpa_overshoot,
        }

    def trace_lines(self):
        return [json.dumps(tr.to_dict(), sort_keys=True) for tr in self.trace]


def run_episode(policy, gt: GroundTruth, config: CampaignConfig, mode=FLUID, rng=None, rel_tol=DEFAULT_REL_TOL):
    """Run one campaign end to end.

    ``policy`` is either a controller exposing ``decide(t, state, constraints,
    config)`` or a bare predictor, which is wrapped in :class:`MinPacing`.
    """
    if gt.horizon != config.horizon:
        raise ValueError(f"ground truth has {gt.horizon} ticks, config says {config.horizon}")
    if not hasattr(policy, "decide"):
        policy = MinPacing(policy, rel_tol)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    state = EpisodeState()
    result = EpisodeResult(config)
    lo, hi = config.action_range
    for t in range(1, config.horizon + 1):
        if state.t != t or state.cost < 0 or state.value < 0 or len(state.alphas) != t - 1:
            raise StateError(f"inconsistent episode state at tick {t}")
        cons = remaining_constraints(state, config)
        feats = tuple(float(x) for x in observe_features(state, config))
        if config.hard_budget_stop and state.cost >= config.budget:
            decision = ControlDecision(0.0, 0.0, 0.0)
            outcome = TickOutcome(0.0, 0.0, int(gt.traffic[t - 1]))
            state.record(0.0, outcome)
            result.trace.append(TickTrace(t, decision, outcome, cons.remaining_budget, cons.cpa_slack, feats,
                                          stopped=True))
            continue
        decision = policy.decide(t, state, cons, config)
        if not lo <= decision.alpha_t <= hi:
            raise StateError(f"controller emitted alpha {decision.alpha_t} outside [{lo}, {hi}]")
        pred_cost = pred_psi = None
        bundle = getattr(policy, "last_bundle", None)
        if bundle is not None:
            pred_cost = float(bundle.total_cost(decision.alpha_t))
            pred_psi = float(bundle.psi(decision.alpha_t, config.target_cpa))
        outcome = run_tick(gt, state, decision.alpha_t, mode, rng, config.action_range)
        state.record(decision.alpha_t, outcome)
        result.trace.append(TickTrace(t, decision, outcome, cons.remaining_budget, cons.cpa_slack, feats,
                                      pred_cost, pred_psi))
    return result
