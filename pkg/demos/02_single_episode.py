"""One 48-tick campaign run by min-pacing with perfect forecasts.

Prints every eighth tick so the receding-horizon behaviour is visible: the
multiplier is recomputed from the remaining budget and CPA slack each tick.
"""

from minpace import score
from minpace.bench import reference_experiment, run_replication

cfg = reference_experiment(replications=1)
res = run_replication(cfg, seed=100)

print(" t    alpha   alpha_B   alpha_C   spend    budget left")
for tr in res.trace[::8]:
    d = tr.decision
    print(f"{tr.t:2d}  {d.alpha_t:7.4f}  {d.alpha_B:8.4f}  {d.alpha_C:8.4f}  {tr.outcome.cost:7.1f}  {tr.remaining_budget:9.1f}")

s = score(res.total_value, res.realized_cpa, cfg.campaign.target_cpa)
print(f"\nvalue {res.total_value:.1f}, cost {res.total_cost:.1f} of {cfg.campaign.budget:.0f}, "
      f"realized CPA {res.realized_cpa:.4f} (target {cfg.campaign.target_cpa})")
print(f"score {s.score:.1f} with penalty {s.penalty:.4f}")
