"""Command-line entry points.

    minpace simulate  one episode, trace as JSONL
    minpace fit       fit a response bundle from a tick log
    minpace verify    gap | exact | violation harness runs
    minpace bench     multi-seed benchmark, CSV plus summary JSON
    minpace shift     benchmark under a distribution-shift scenario

Validation failures exit with status 2 and a JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench, theory
from .controller import Constraints
from .curves import FAMILIES
from .market import MODES, ConfigError
from .predictors import SIGN_PATTERNS, FitError, fit_bundle_detailed
from .records import RecordError, read_tick_log, write_tick_log


class UsageError(ValueError):
    pass


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _experiment(args):
    cfg = bench.ExperimentConfig.load(args.config) if args.config else bench.reference_experiment()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "mode", None):
        cfg = replace(cfg, mode=args.mode)
    return cfg


def cmd_simulate(args):
    cfg = _experiment(args)
    seed = cfg.campaign.seed
    res = bench.run_replication(cfg, seed)
    _emit("".join(line + "\n" for line in res.trace_lines()), args.out)
    if args.log_out:
        write_tick_log(args.log_out, res.records())
    summary = res.summary()
    summary.update(seed=seed, score=bench.score(res.total_value, res.realized_cpa, cfg.campaign.target_cpa).score)
    # the trace owns stdout when no --out is given
    (sys.stdout if args.out else sys.stderr).write(_dump(summary))


def cmd_fit(args):
    if args.log:
        records = read_tick_log(args.log)
    else:
        cfg = _experiment(args)
        camp, gt = bench.build_campaign(cfg, cfg.campaign.seed)
        records = bench.logging_records(gt, camp, cfg.campaign.seed, cfg.mode)
    seed = 0 if args.seed is None else args.seed
    fit = fit_bundle_detailed(records, args.t, args.M, args.lambda_I, args.restarts, np.random.default_rng(seed),
                              family=args.family, strict=not args.lenient)
    out = fit.to_dict()
    out.update(anchor=args.t, M=args.M, lambda_I=args.lambda_I, seed=seed, records=len(records))
    _emit(_dump(out), args.out)


def _verify_gap(args, base):
    rows = []
    for i in range(args.n):
        gt, cfg = theory.gap_instance(base + i, horizon=args.horizon, profile=args.profile)
        grid = np.linspace(cfg.alpha_low, cfg.alpha_high, args.grid)
        rep = theory.gap_check(gt, 1, grid, Constraints(cfg.budget, 0.0), cfg)
        d = rep.to_dict()
        d.update(seed=base + i, holds=rep.holds)
        rows.append(d)
    checked = [r for r in rows if not r["inconclusive"]]
    return {"kind": "gap", "instances": rows, "checked": len(checked),
            "passed": sum(r["holds"] for r in checked), "all_hold": all(r["holds"] for r in checked)}


def _verify_exact(args, base):
    rng = np.random.default_rng(base)
    hits = 0
    for _ in range(args.n):
        bundle, cons, cfg = theory.random_exactness_case(rng)
        hits += theory.exactness_check(bundle, cons, cfg)
    return {"kind": "exact", "cases": args.n, "matches": hits, "all_match": hits == args.n}


def _verify_violation(args, base):
    lines = ["seed," + ",".join(theory.CSV_COLUMNS)]
    ok = True
    for i in range(args.n):
        gt, cfg = theory.violation_instance(base + i, horizon=args.horizon)
        rep = theory.violation_sweep(gt, cfg, theory.error_ladder(sign=args.sign))
        ok &= rep.within_bounds()
        for row in rep.to_csv().splitlines()[1:]:
            lines.append(f"{base + i},{row}")
    return "\n".join(lines) + "\n", ok


def cmd_verify(args):
    base = 0 if args.seed is None else args.seed
    if args.kind == "violation":
        if args.horizon is None:
            args.horizon = 48
        text, ok = _verify_violation(args, base)
        _emit(text, args.out)
        sys.stderr.write(_dump({"kind": "violation", "within_bounds": ok}))
        return 0 if ok else 1
    if args.horizon is None:
        args.horizon = 4
    report = _verify_gap(args, base) if args.kind == "gap" else _verify_exact(args, base)
    _emit(_dump(report), args.out)
    return 0 if report.get("all_hold", report.get("all_match")) else 1


def cmd_bench(args):
    cfg = _experiment(args)
    if args.replications is not None:
        cfg = replace(cfg, replications=args.replications)
    if args.out is None:
        raise UsageError("bench needs --out for the CSV")
    res = bench.run_benchmark(cfg, args.out)
    sys.stdout.write(_dump(res.summary))


def cmd_shift(args):
    cfg = _experiment(args)
    if args.replications is not None:
        cfg = replace(cfg, replications=args.replications)
    if args.out is None:
        raise UsageError("shift needs --out for the CSV")
    normal = bench.run_benchmark(cfg).summary
    shifted = bench.run_benchmark(bench.shift_scenario(cfg, args.scenario), args.out).summary
    sys.stdout.write(_dump({"scenario": args.scenario, "normal": normal, "shifted": shifted,
                            "degradation_pct": bench.degradation(normal["mean_score"], shifted["mean_score"])}))


def build_parser():
    p = argparse.ArgumentParser(prog="minpace", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="experiment config JSON (default: built-in reference campaign)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--mode", choices=MODES)

    sp = sub.add_parser("simulate", help="run one episode and write its trace")
    common(sp)
    sp.add_argument("--log-out", help="also write the episode as a tick log")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit a response bundle")
    common(sp)
    sp.add_argument("--log", help="JSONL tick log (default: behaviour-policy log of the config campaign)")
    sp.add_argument("--t", type=int, default=1, help="anchor tick")
    sp.add_argument("--M", type=int, default=8)
    sp.add_argument("--lambda-I", dest="lambda_I", type=float, default=0.1)
    sp.add_argument("--restarts", type=int, default=5)
    sp.add_argument("--family", choices=FAMILIES, default="log_sigmoid")
    sp.add_argument("--lenient", action="store_true",
                    help="return the best iterate, flagged converged=false, when no restart converges")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("verify", help="theorem harness runs")
    sp.add_argument("kind", choices=("gap", "exact", "violation"))
    common(sp, config=False)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--horizon", type=int, default=None)
    sp.add_argument("--grid", type=int, default=32)
    sp.add_argument("--profile", default="heterogeneous")
    sp.add_argument("--sign", choices=SIGN_PATTERNS, default="adverse")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("bench", help="multi-seed benchmark")
    common(sp)
    sp.add_argument("--replications", type=int)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("shift", help="benchmark under a shift scenario")
    common(sp)
    sp.add_argument("--scenario", choices=bench.SCENARIOS, required=True)
    sp.add_argument("--replications", type=int)
    sp.set_defaults(func=cmd_shift)
    return p


_DEFAULT_N = {"gap": 200, "exact": 1000, "violation": 50}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "verify" and args.n is None:
        args.n = _DEFAULT_N[args.kind]
    try:
        rc = args.func(args)
    except (ConfigError, RecordError, FitError, UsageError, ValueError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        line = getattr(exc, "line", None)
        if line is not None:
            err["line"] = line
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return 2
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
