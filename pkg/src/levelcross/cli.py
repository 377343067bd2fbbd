"""Command-line entry point: ``levelcross --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import config as _config
from . import report as _report
from .errors import ConfigError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="levelcross",
        description="Run level-crossing scenarios and write CSV/JSON comparison reports.",
    )
    p.add_argument("--config", required=True,
                   help="scenario JSON file, or the name of a bundled one (e.g. paper_examples)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override every scenario's master seed")
    p.add_argument("--workers", type=int, default=None, help="threads per Monte Carlo batch")
    p.add_argument("--scenario", default=None, help="run only the scenario with this name")
    p.add_argument("--plotdata", action="store_true",
                   help="also write <name>.plot.csv (alpha,mean,lo,hi,oracle) for level scenarios")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config.load(args.config, seed=args.seed, workers=args.workers, only=args.scenario)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    result = _report.run(cfg, args.out, plotdata=args.plotdata)
    for rep in result.reports:
        bad = sum(r.verdict == _report.DISAGREE for r in rep.rows)
        status = "error" if rep.error else ("ok" if rep.ok else f"{bad} disagree")
        print(f"{rep.name}: {len(rep.rows)} rows, {status}")
    for err in result.errors:
        print(f"error: {err}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
