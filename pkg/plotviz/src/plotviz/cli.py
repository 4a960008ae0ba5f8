"""plotviz command line: regret curves and mode timelines from harness CSVs."""

from __future__ import annotations

import argparse
import sys

from plotviz.figures import NoDataError, SchemaError, ValidationError, plot_mode_timeline, plot_regret


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plotviz", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_regret = sub.add_parser("regret", help="mean regret curves with stderr bands")
    p_regret.add_argument("--csv", nargs="+", required=True, help="harness result CSV(s)")
    p_regret.add_argument("--objective", choices=("condorcet", "borda"), default="condorcet")
    p_regret.add_argument("--loglog", action="store_true", help="log-log axes with slope annotation")
    p_regret.add_argument("--out", required=True, help="output image path (.png)")

    p_tl = sub.add_parser("timeline", help="per-seed mode-switch raster and active-set size")
    p_tl.add_argument("--csv", required=True, help="sa_midex harness result CSV")
    p_tl.add_argument("--out", required=True, help="output image path (.png)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "regret":
            plot_regret(args.csv, args.objective, args.out, loglog=args.loglog)
        else:
            plot_mode_timeline(args.csv, args.out)
    except (SchemaError, NoDataError, ValidationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out} and {args.out}.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
