"""Command-line entry points: run experiments, verify oracles, compare runs."""

from __future__ import annotations

import argparse
import json
import sys

from multiduel import harness
from multiduel.oracles import run_all_verifications


def _cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    if args.out:
        cfg.out = args.out
    if args.workers:
        cfg.workers = args.workers
    result = harness.run_experiment(cfg, workers=cfg.workers)
    out_dir = cfg.out or "results"
    paths = harness.write_outputs(result, out_dir)
    print(f"wrote {paths['csv']} and {paths['summary']}")
    for objective in ("condorcet", "borda"):
        block = result.summary[objective]
        final = block["checkpoints"][-1]
        slope = block["slope"]
        slope_txt = f"slope={slope['value']:.3f}+-{slope['stderr']:.3f}" if slope else "slope=n/a"
        mean = final["mean"]
        mean_txt = f"{mean:.3f}" if mean == mean else "nan"
        print(f"{objective}: final mean regret {mean_txt} +- {final['stderr']:.3f} ({slope_txt})")
    return 0


def _cmd_verify(args) -> int:
    reports = run_all_verifications()
    failed = 0
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: max_error={r.max_error:.3e} tol={r.tolerance:.1e} {r.detail}")
        failed += 0 if r.passed else 1
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"reports": [r.as_dict() for r in reports], "passed": failed == 0}, fh, indent=2)
        print(f"wrote {args.json}")
    return 0 if failed == 0 else 1


def _cmd_compare(args) -> int:
    rows = []
    for path in args.inputs:
        rows.extend(harness.read_result_csv(path))
    algos = sorted(set(r.algo for r in rows))
    if len(algos) != 2:
        print(f"error: need exactly two algorithms across inputs, found {algos}", file=sys.stderr)
        return 2
    report = harness.compare_runs(rows, (algos[0], algos[1]), objective=args.objective)
    print(json.dumps(report, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multiduel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config-driven experiment")
    p_run.add_argument("--config", required=True, help="experiment config file")
    p_run.add_argument("--out", default=None, help="output directory (overrides config)")
    p_run.add_argument("--workers", type=int, default=None, help="parallel replications")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify", help="run the oracle battery")
    p_verify.add_argument("--json", default=None, help="also write a JSON report here")
    p_verify.set_defaults(func=_cmd_verify)

    p_cmp = sub.add_parser("compare", help="paired comparison of two result CSVs")
    p_cmp.add_argument("--inputs", nargs="+", required=True, help="harness CSV files")
    p_cmp.add_argument("--objective", choices=("condorcet", "borda"), default="condorcet")
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (harness.ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
