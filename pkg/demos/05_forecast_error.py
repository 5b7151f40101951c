"""Constraint overshoot as forecast error grows.

With exact forecasts the controller never overshoots.  Cost forecasts that
are biased low make it overspend; the overshoot should stay under the
analytic bound and roughly double when the error doubles.
"""

from minpace.theory import error_ladder, violation_instance, violation_sweep

gt, cfg = violation_instance(1000)
rep = violation_sweep(gt, cfg, error_ladder(sign="adverse"))
print(f"budget {cfg.budget:.1f}, target CPA {cfg.target_cpa:.4f}\n")
print(f"{'eps':>6s} {'budget over':>12s} {'bound':>10s} {'cpa over':>10s} {'bound':>10s}")
for r in rep.rows:
    print(f"{r['eps_C']:6.3f} {r['overshoot_budget']:12.3f} {r['bound_budget']:10.3f} "
          f"{r['overshoot_cpa']:10.3f} {r['bound_cpa']:10.3f}")
print(f"\nall within bounds: {rep.within_bounds()}")
