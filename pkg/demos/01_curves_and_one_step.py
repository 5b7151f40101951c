"""How a response bundle turns into a bid multiplier.

Builds the aggregate cost and value curves of one synthetic campaign, then
asks the analytic controller for the budget root, the CPA root and their
minimum.
"""

import numpy as np

from minpace import CurveParams, OraclePredictor, generate_campaign, min_pacing_step
from minpace.controller import Constraints
from minpace.market import CampaignConfig

# A single log-sigmoid curve: zero at alpha = 0, saturating at a.
p = CurveParams(a=2.0, b=1.5, c=0.0)
for alpha in (0.0, 0.25, 0.5, 1.0, 2.0, 8.0):
    print(f"alpha={alpha:5.2f}  value={p(alpha):.4f}  slope={p.slope(alpha) if alpha > 0 else float('nan'):.4f}")

cfg = CampaignConfig(budget=12000.0, target_cpa=1.0, horizon=48, seed=3)
gt = generate_campaign(cfg, "heterogeneous")
bundle = OraclePredictor(gt)(1, None)
print(f"\nremaining traffic {bundle.traffic:.0f}")

grid = np.geomspace(*cfg.action_range, 7)
print("alpha      total cost   Psi(alpha)")
for a in grid:
    print(f"{a:8.3f}  {bundle.total_cost(a):11.1f}  {bundle.psi(a, cfg.target_cpa):11.1f}")

# At the start of the episode the CPA slack is zero, so alpha_C is where Psi crosses 0.
decision = min_pacing_step(bundle, Constraints(cfg.budget, 0.0), cfg)
print(f"\nalpha_B={decision.alpha_B:.4f}  alpha_C={decision.alpha_C:.4f}  executed={decision.alpha_t:.4f}")
