"""Experiment configs, scoring, baseline controllers, shift scenarios and the
multi-seed benchmark runner."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .controller import ControlDecision, MinPacing, run_episode
from .market import FLUID, MODES, PROFILES, CampaignConfig, ConfigError, EpisodeState, generate_campaign, run_tick
from .predictors import ErrorSpec, FittedPredictor, OraclePredictor
from .records import TickRecord

COMPETITION_SURGE = "competition_surge"
CPA_TIGHTEN = "cpa_tighten"
SCENARIOS = (COMPETITION_SURGE, CPA_TIGHTEN)
SURGE_FACTOR = 1.1
TIGHTEN_FACTOR = 0.8

ROW_COLUMNS = ("seed", "total_value", "total_cost", "realized_cpa", "penalty", "score", "budget_violated",
               "cpa_violated")


@dataclass(frozen=True)
class ScoreResult:
    total_value: float
    realized_cpa: float
    penalty: float
    score: float


def score(total_value, realized_cpa, target, beta=2.0) -> ScoreResult:
    """Value discounted by ``min((target / cpa) ** beta, 1)``.

    An infinite CPA (spend without value) scores zero; zero CPA (no spend)
    carries no penalty.
    """
    if total_value < 0:
        raise ValueError("total value must be non-negative")
    if math.isinf(realized_cpa):
        p = 0.0
    elif realized_cpa <= 0:
        p = 1.0
    else:
        p = min((target / realized_cpa) ** beta, 1.0)
    return ScoreResult(total_value, realized_cpa, p, p * total_value)


# ---------------------------------------------------------------------------
# baselines


class FixedAlpha:
    def __init__(self, alpha):
        self.alpha = float(alpha)

    def decide(self, t, state, constraints, config):
        lo, hi = config.action_range
        if not lo <= self.alpha <= hi:
            raise ConfigError(f"fixed alpha {self.alpha} outside [{lo}, {hi}]")
        return ControlDecision(self.alpha, self.alpha, self.alpha)


class FeedbackPacing:
    """Proportional pacer on spend versus the even schedule ``B * (t - 1) / T``.

    ``alpha_t = alpha_{t-1} * exp(-gain * e)`` where ``e`` is the schedule
    deviation in units of one tick's even budget share.
    """

    def __init__(self, alpha0, gain):
        self.alpha0 = float(alpha0)
        self.gain = float(gain)

    def decide(self, t, state, constraints, config):
        lo, hi = config.action_range
        if not lo <= self.alpha0 <= hi:
            raise ConfigError(f"initial alpha {self.alpha0} outside [{lo}, {hi}]")
        if not state.alphas:
            return ControlDecision(self.alpha0, self.alpha0, self.alpha0)
        share = config.budget / config.horizon
        err = (state.cost - share * (t - 1)) / share
        a = float(np.clip(state.alphas[-1] * math.exp(-self.gain * err), lo, hi))
        return ControlDecision(a, a, a)


def baseline_controller(kind, **params):
    if kind == "fixed_alpha":
        return FixedAlpha(params["alpha"])
    if kind == "feedback_pacing":
        return FeedbackPacing(params.get("alpha0", params.get("alpha", 1.0)), params.get("gain", 0.5))
    raise ConfigError(f"unknown baseline {kind!r}")


# ---------------------------------------------------------------------------
# experiment configs


@dataclass(frozen=True)
class ExperimentConfig:
    campaign: CampaignConfig
    profile: str = "heterogeneous"
    market: dict = field(default_factory=dict)
    comp_cap_scale: float = 1.0
    predictor: dict = field(default_factory=lambda: {"kind": "oracle"})
    controller: dict = field(default_factory=lambda: {"kind": "min_pacing"})
    mode: str = FLUID
    replications: int = 1

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.comp_cap_scale > 0:
            raise ConfigError("comp_cap_scale must be positive")
        if self.predictor.get("kind") not in ("oracle", "noisy_oracle", "fitted"):
            raise ConfigError(f"unknown predictor kind {self.predictor.get('kind')!r}")
        if self.controller.get("kind") not in ("min_pacing", "fixed_alpha", "feedback_pacing"):
            raise ConfigError(f"unknown controller kind {self.controller.get('kind')!r}")

    def to_dict(self):
        return {
            "campaign": self.campaign.to_dict(),
            "profile": self.profile,
            "market": dict(self.market),
            "comp_cap_scale": self.comp_cap_scale,
            "predictor": dict(self.predictor),
            "controller": dict(self.controller),
            "mode": self.mode,
            "replications": self.replications,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        try:
            d["campaign"] = CampaignConfig.from_dict(d["campaign"])
            market = d.get("market", {})
            for key in ("value_scale", "conv_rate", "cap_ratio"):
                if key in market:
                    market[key] = tuple(market[key])
            return cls(**d)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from None

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def with_seed(self, seed):
        return replace(self, campaign=self.campaign.replace(seed=int(seed)))


def shift_scenario(config: ExperimentConfig, scenario) -> ExperimentConfig:
    """Whole-episode distribution shift.

    ``competition_surge`` raises every competitor cap by 10%; ``cpa_tighten``
    cuts the CPA target to 80%.
    """
    if scenario == COMPETITION_SURGE:
        return replace(config, comp_cap_scale=config.comp_cap_scale * SURGE_FACTOR)
    if scenario == CPA_TIGHTEN:
        c = config.campaign
        return replace(config, campaign=c.replace(target_cpa=c.target_cpa * TIGHTEN_FACTOR))
    raise ConfigError(f"unknown scenario {scenario!r}")


def build_campaign(config: ExperimentConfig, seed):
    camp = config.campaign.replace(seed=int(seed))
    gt = generate_campaign(camp, config.profile, **config.market)
    if config.comp_cap_scale != 1.0:
        gt = gt.scaled(comp_cap=config.comp_cap_scale)
    return camp, gt


def logging_records(gt, campaign, seed, mode=FLUID):
    """Offline tick log from a behaviour policy with log-uniform multipliers around the saturation knee."""
    rng = np.random.default_rng([int(seed), 7])
    sat = gt.saturation_alpha()
    lo = max(campaign.alpha_low, 0.1 * sat)
    hi = min(campaign.alpha_high, 1.5 * sat)
    state = EpisodeState()
    out = []
    for t in range(1, campaign.horizon + 1):
        a = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        o = run_tick(gt, state, a, mode, rng)
        state.record(a, o)
        out.append(TickRecord(t, a, o.opportunities, o.cost, o.value))
    return out


def build_policy(config: ExperimentConfig, gt, campaign, seed):
    ctl = config.controller
    kind = ctl["kind"]
    if kind != "min_pacing":
        params = {k: v for k, v in ctl.items() if k != "kind"}
        return baseline_controller(kind, **params)
    pred = config.predictor
    if pred["kind"] == "oracle":
        return MinPacing(OraclePredictor(gt))
    if pred["kind"] == "noisy_oracle":
        err = ErrorSpec(pred.get("eps_C", 0.0), pred.get("eps_V", 0.0), pred.get("eps_I", 0.0),
                        pred.get("sign", "inflate"))
        return MinPacing(OraclePredictor(gt, err, seed=[int(seed), 3]))
    records = logging_records(gt, campaign, seed, config.mode)
    return MinPacing(FittedPredictor(records, pred.get("M", 8), pred.get("lambda_I", 0.1), pred.get("restarts", 5),
                                     seed=int(seed), family=pred.get("family", "log_sigmoid"),
                                     max_iter=pred.get("max_iter", 500)))


def run_replication(config: ExperimentConfig, seed):
    camp, gt = build_campaign(config, seed)
    policy = build_policy(config, gt, camp, seed)
    res = run_episode(policy, gt, camp, config.mode, rng=np.random.default_rng([int(seed), 1]))
    return res


@dataclass
class BenchmarkResult:
    rows: list
    summary: dict

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ROW_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(r[c]) for c in ROW_COLUMNS])


def _fmt(x):
    if isinstance(x, bool):
        return int(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    return f"{x:.9g}"


def run_benchmark(config: ExperimentConfig, out_path=None) -> BenchmarkResult:
    """One episode per replication seed, scored; optionally written as CSV plus a summary JSON."""
    rows = []
    base = config.campaign.seed
    for r in range(config.replications):
        seed = base + r
        res = run_replication(config, seed)
        sc = score(res.total_value, res.realized_cpa, res.config.target_cpa)
        rows.append({
            "seed": seed,
            "total_value": res.total_value,
            "total_cost": res.total_cost,
            "realized_cpa": res.realized_cpa,
            "penalty": sc.penalty,
            "score": sc.score,
            "budget_violated": res.total_cost > res.config.budget,
            "cpa_violated": res.realized_cpa > res.config.target_cpa,
        })
    scores = np.array([r["score"] for r in rows])
    values = np.array([r["total_value"] for r in rows])
    summary = {
        "replications": config.replications,
        "mean_score": float(scores.mean()),
        "std_score": float(scores.std()),
        "mean_value": float(values.mean()),
        "std_value": float(values.std()),
        "violation_rate": float(np.mean([r["budget_violated"] or r["cpa_violated"] for r in rows])),
    }
    result = BenchmarkResult(rows, summary)
    if out_path is not None:
        result.to_csv(out_path)
        with open(_summary_path(out_path), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result


def _summary_path(out_path):
    p = Path(out_path)
    return p.with_name(p.stem + ".summary.json")


def degradation(normal_mean, shifted_mean):
    """Percentage drop from normal to shifted mean score."""
    if normal_mean <= 0:
        return math.nan
    return 100.0 * (normal_mean - shifted_mean) / normal_mean


def tune_fixed_alpha(config: ExperimentConfig, candidates):
    """Fixed multiplier with the best mean score on ``config`` (unshifted)."""
    best = None
    for a in candidates:
        cfg = replace(config, controller={"kind": "fixed_alpha", "alpha": float(a)})
        m = run_benchmark(cfg).summary["mean_score"]
        if best is None or m > best[1]:
            best = (float(a), m)
    return best[0]


def reference_experiment(replications=50, seed=100, mode=FLUID) -> ExperimentConfig:
    """Heterogeneous 48-tick campaign where the CPA target binds on most seeds and the budget on the rest."""
    camp = CampaignConfig(budget=12000.0, target_cpa=1.0, horizon=48, seed=seed, hard_budget_stop=True)
    return ExperimentConfig(camp, "heterogeneous", mode=mode, replications=replications)


FIXED_ALPHA_CANDIDATES = tuple(float(a) for a in np.round(np.linspace(0.2, 2.0, 37), 3))
FEEDBACK_GAIN = 0.3


def directional_comparison(config: ExperimentConfig, candidates=FIXED_ALPHA_CANDIDATES, gain=FEEDBACK_GAIN):
    """Min-pacing with a zero-error oracle against a tuned fixed multiplier and a feedback pacer.

    The fixed multiplier is tuned on the unshifted campaign with the same
    seeds; the feedback pacer starts from it.  Returns per-controller mean
    scores, violation rates and degradation under each shift scenario.
    """
    alpha = tune_fixed_alpha(config, candidates)
    controllers = {
        "min_pacing": {"kind": "min_pacing"},
        "fixed_alpha": {"kind": "fixed_alpha", "alpha": alpha},
        "feedback_pacing": {"kind": "feedback_pacing", "alpha0": alpha, "gain": gain},
    }
    out = {"tuned_alpha": alpha, "controllers": {}}
    for name, ctl in controllers.items():
        cfg = replace(config, controller=ctl, predictor={"kind": "oracle"})
        normal = run_benchmark(cfg).summary
        entry = {"mean_score": normal["mean_score"], "violation_rate": normal["violation_rate"], "degradation": {}}
        for sc in SCENARIOS:
            shifted = run_benchmark(shift_scenario(cfg, sc)).summary
            entry["degradation"][sc] = degradation(normal["mean_score"], shifted["mean_score"])
        out["controllers"][name] = entry
    return out
