"""Synthetic tick-level second-price market with closed-form response curves.

Every opportunity in tick ``k`` is worth ``v_k`` to us; we bid ``alpha * v_k``
against a single competing bid drawn uniformly on ``[0, M_k]`` and pay the
competing bid on a win.  A win converts with probability ``p_k``.  This gives

    C_k(alpha) = min(alpha v_k, M_k)^2 / (2 M_k)
    V_k(alpha) = p_k min(alpha v_k / M_k, 1)

per opportunity.  Both are strictly increasing below the saturation point
``alpha = M_k / v_k`` and flat above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UNIFORM = "uniform"
DIURNAL = "diurnal"
HETEROGENEOUS = "heterogeneous"
PROFILES = (UNIFORM, DIURNAL, HETEROGENEOUS)

FLUID = "fluid"
STOCHASTIC = "stochastic"
MODES = (FLUID, STOCHASTIC)

DEFAULT_ACTION_RANGE = (0.01, 300.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    budget: float
    target_cpa: float
    horizon: int
    alpha_low: float = DEFAULT_ACTION_RANGE[0]
    alpha_high: float = DEFAULT_ACTION_RANGE[1]
    seed: int = 0
    hard_budget_stop: bool = False

    def __post_init__(self):
        if not self.budget > 0:
            raise ConfigError("budget must be positive")
        if not self.target_cpa > 0:
            raise ConfigError("target_cpa must be positive")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError("horizon must be a positive integer")
        if not 0 < self.alpha_low < self.alpha_high:
            raise ConfigError("need 0 < alpha_low < alpha_high")

    @property
    def action_range(self):
        return (self.alpha_low, self.alpha_high)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return CampaignConfig(**d)

    def to_dict(self):
        return {
            "budget": self.budget,
            "target_cpa": self.target_cpa,
            "horizon": self.horizon,
            "alpha_low": self.alpha_low,
            "alpha_high": self.alpha_high,
            "seed": self.seed,
            "hard_budget_stop": self.hard_budget_stop,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-tick market parameters; arrays all have length T (tick k at index k-1)."""

    traffic: np.ndarray
    value_scale: np.ndarray
    conv_rate: np.ndarray
    comp_cap: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.traffic, self.value_scale, self.conv_rate, self.comp_cap)]
        n = len(arrs[0])
        if n < 1 or any(a.shape != (n,) for a in arrs):
            raise ConfigError("ground-truth arrays must be 1-D with a common length >= 1")
        traffic, v, p, m = arrs
        if np.any(traffic < 1) or np.any(traffic != np.round(traffic)):
            raise ConfigError("traffic must be integers >= 1")
        if np.any(v <= 0) or np.any(m <= 0):
            raise ConfigError("value scale and competitor cap must be positive")
        if np.any(p <= 0) or np.any(p > 1):
            raise ConfigError("conversion rate must lie in (0, 1]")
        for name, a in zip(("traffic", "value_scale", "conv_rate", "comp_cap"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def horizon(self):
        return len(self.traffic)

    def __eq__(self, other):
        if not isinstance(other, GroundTruth):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("traffic", "value_scale", "conv_rate", "comp_cap")
        )

    def scaled(self, *, comp_cap=1.0, conv_rate=1.0):
        return GroundTruth(self.traffic, self.value_scale, self.conv_rate * conv_rate, self.comp_cap * comp_cap)

    def saturation_alpha(self):
        """Smallest multiplier at which some tick always wins."""
        return float(np.min(self.comp_cap / self.value_scale))

    def to_dict(self):
        return {
            "traffic": [int(x) for x in self.traffic],
            "value_scale": self.value_scale.tolist(),
            "conv_rate": self.conv_rate.tolist(),
            "comp_cap": self.comp_cap.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["traffic"], d["value_scale"], d["conv_rate"], d["comp_cap"])


@dataclass(frozen=True)
class TickOutcome:
    cost: float
    value: float
    opportunities: int


@dataclass
class EpisodeState:
    """Running totals of one episode; ``t`` is the 1-based index of the next tick."""

    t: int = 1
    cost: float = 0.0
    value: float = 0.0
    alphas: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def record(self, alpha, outcome: TickOutcome):
        if outcome.cost < 0 or outcome.value < 0:
            raise ValueError("tick outcomes must be non-negative")
        self.alphas.append(float(alpha))
        self.costs.append(float(outcome.cost))
        self.values.append(float(outcome.value))
        self.cost += outcome.cost
        self.value += outcome.value
        self.t += 1


class ResponseCurve:
    """Traffic-weighted average of closed-form per-tick cost or value curves.

    Evaluates on scalars or arrays of alpha.  ``sup`` is the saturation level.
    """

    def __init__(self, kind, value_scale, comp_cap, conv_rate, weights):
        if kind not in ("cost", "value"):
            raise ValueError(kind)
        self.kind = kind
        self.v = np.asarray(value_scale, dtype=float)
        self.m = np.asarray(comp_cap, dtype=float)
        self.p = np.asarray(conv_rate, dtype=float)
        w = np.asarray(weights, dtype=float)
        self.w = w / w.sum()

    def _per_tick(self, alpha):
        alpha = np.asarray(alpha, dtype=float)[..., None]
        bid = np.minimum(alpha * self.v, self.m)
        if self.kind == "cost":
            return bid * bid / (2.0 * self.m)
        return self.p * bid / self.m

    def _per_tick_slope(self, alpha):
        alpha = np.asarray(alpha, dtype=float)[..., None]
        live = alpha * self.v < self.m
        if self.kind == "cost":
            return np.where(live, alpha * self.v * self.v / self.m, 0.0)
        return np.where(live, self.p * self.v / self.m, 0.0)

    def __call__(self, alpha):
        out = self._per_tick(alpha) @ self.w
        return float(out) if np.ndim(out) == 0 else out

    def slope(self, alpha):
        out = self._per_tick_slope(alpha) @ self.w
        return float(out) if np.ndim(out) == 0 else out

    def second_derivative(self, alpha):
        alpha = np.asarray(alpha, dtype=float)[..., None]
        if self.kind == "value":
            out = np.zeros(np.shape(alpha)[:-1])
            return float(out) if out.ndim == 0 else out
        live = alpha * self.v < self.m
        out = np.where(live, self.v * self.v / self.m, 0.0) @ self.w
        return float(out) if np.ndim(out) == 0 else out

    @property
    def sup(self):
        if self.kind == "cost":
            return float(self.w @ (self.m / 2.0))
        return float(self.w @ self.p)


def _tick_index(gt: GroundTruth, k):
    if int(k) != k or not 1 <= k <= gt.horizon:
        raise IndexError(f"tick {k} outside 1..{gt.horizon}")
    return int(k) - 1


def generate_campaign(
    config: CampaignConfig,
    profile: str = UNIFORM,
    *,
    traffic: int = 1000,
    value_scale=(0.8, 1.2),
    conv_rate=(0.2, 0.6),
    cap_ratio=(1.0, 2.0),
    spread: float = 0.4,
) -> GroundTruth:
    """Draw a campaign's ground truth, deterministically from ``config.seed``.

    ``value_scale``, ``conv_rate`` and ``cap_ratio`` (``M / v``) are ranges
    for the campaign-level base draw.  For the heterogeneous profile each tick
    then multiplies ``p`` and ``M`` (and traffic) by factors in
    ``[1 - spread, 1 + spread]``.
    """
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    rng = np.random.default_rng(config.seed)
    T = config.horizon
    v = rng.uniform(*value_scale)
    p = rng.uniform(*conv_rate)
    m = v * rng.uniform(*cap_ratio)
    ones = np.ones(T)
    if profile == UNIFORM:
        return GroundTruth(np.full(T, int(traffic)), v * ones, p * ones, m * ones)
    if profile == DIURNAL:
        k = np.arange(T)
        shape = 1.0 + 0.6 * np.sin(4.0 * math.pi * (k + 0.5) / T - 0.5 * math.pi)
        counts = np.maximum(np.rint(traffic * shape), 1)
        return GroundTruth(counts, v * ones, p * ones, m * ones)
    lo, hi = 1.0 - spread, 1.0 + spread
    counts = np.maximum(np.rint(traffic * rng.uniform(lo, hi, T)), 1)
    p_k = np.minimum(p * rng.uniform(lo, hi, T), 1.0)
    m_k = m * rng.uniform(lo, hi, T)
    return GroundTruth(counts, v * ones, p_k, m_k)


def true_tick_curves(gt: GroundTruth, k):
    """Closed-form per-opportunity (cost, value) curves of tick ``k`` (1-based)."""
    i = _tick_index(gt, k)
    sl = slice(i, i + 1)
    args = (gt.value_scale[sl], gt.comp_cap[sl], gt.conv_rate[sl], [1.0])
    return ResponseCurve("cost", *args), ResponseCurve("value", *args)


def aggregate_response(gt: GroundTruth, t):
    """Remaining traffic and traffic-weighted aggregate curves over ticks t..T."""
    i = _tick_index(gt, t)
    sl = slice(i, None)
    args = (gt.value_scale[sl], gt.comp_cap[sl], gt.conv_rate[sl], gt.traffic[sl])
    remaining = float(gt.traffic[sl].sum())
    return remaining, ResponseCurve("cost", *args), ResponseCurve("value", *args)


def run_tick(gt: GroundTruth, state: EpisodeState, alpha, mode=FLUID, rng=None, action_range=None) -> TickOutcome:
    """Execute multiplier ``alpha`` for tick ``state.t``.

    Fluid mode returns expected totals; stochastic mode simulates each auction.
    """
    if action_range is not None:
        lo, hi = action_range
        if not lo <= alpha <= hi:
            raise ValueError(f"alpha {alpha} outside action range [{lo}, {hi}]")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    i = _tick_index(gt, state.t)
    n = int(gt.traffic[i])
    v, m, p = gt.value_scale[i], gt.comp_cap[i], gt.conv_rate[i]
    bid = alpha * v
    if mode == FLUID:
        b = min(bid, m)
        return TickOutcome(n * b * b / (2.0 * m), n * p * b / m, n)
    if mode != STOCHASTIC:
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        raise ValueError("stochastic mode needs an rng")
    competing = rng.uniform(0.0, m, size=n)
    won = competing < bid
    n_won = int(won.sum())
    cost = float(competing[won].sum())
    value = float(rng.binomial(n_won, p)) if n_won else 0.0
    return TickOutcome(cost, value, n)


def observe_features(state: EpisodeState, config: CampaignConfig):
    """Context vector at the start of tick ``state.t``.

    (elapsed fraction, remaining-budget fraction, CPA slack, last-tick spend
    relative to an even per-tick share of the budget).
    """
    T = config.horizon
    slack = config.target_cpa * state.value - state.cost
    last = state.costs[-1] if state.costs else 0.0
    return np.array([(state.t - 1) / T, (config.budget - state.cost) / config.budget, slack, last * T / config.budget])


def presaturation_range(gt: GroundTruth, low_fraction=0.05, high_fraction=1.0):
    """Action range that keeps every tick below its saturation point."""
    hi = high_fraction * gt.saturation_alpha()
    return (low_fraction * hi, hi)
