"""Monotone response curves and analytic min-pacing for budget- and CPA-constrained bidding."""

from .bench import ExperimentConfig, ScoreResult, baseline_controller, run_benchmark, score, shift_scenario
from .controller import (Constraints, ControlDecision, MinPacing, bisection_solve, min_pacing_step, run_episode,
                         solve_budget_alpha, solve_cpa_alpha)
from .curves import CurveParams, curve_slope, eval_curve, normalized_sigmoid
from .market import CampaignConfig, GroundTruth, aggregate_response, generate_campaign, run_tick
from .predictors import (ErrorSpec, FittedPredictor, OraclePredictor, ResponseBundle, fit_bundle, fit_loss,
                         oracle_predict)
from .records import TickRecord, read_tick_log, write_tick_log

__version__ = "0.1.0"

__all__ = [
    "CampaignConfig", "Constraints", "ControlDecision", "CurveParams", "ErrorSpec", "ExperimentConfig",
    "FittedPredictor", "GroundTruth", "MinPacing", "OraclePredictor", "ResponseBundle", "ScoreResult", "TickRecord",
    "aggregate_response", "baseline_controller", "bisection_solve", "curve_slope", "eval_curve", "fit_bundle",
    "fit_loss", "generate_campaign", "min_pacing_step", "normalized_sigmoid", "oracle_predict", "read_tick_log",
    "run_benchmark", "run_episode", "run_tick", "score", "shift_scenario", "solve_budget_alpha", "solve_cpa_alpha",
    "write_tick_log",
]
