"""Command-line entry point.

Each subcommand takes ``--config PATH`` (YAML) plus overrides.  Precedence,
lowest to highest: built-in defaults, config file, command-line flags.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, ConfigError, load_config, parse_config
from .runner import ExperimentError, render, run, export

log = logging.getLogger("oppext")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oppext", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--n", type=int, help="path length")
        p.add_argument("--replicas", type=int, help="Monte Carlo replicas")
        p.add_argument("--workers", type=int, help="worker threads")
        p.add_argument("--preset", help="system preset (unit, growth, luroth)")
        p.add_argument("--out", help="output path; stdout when omitted")
        p.add_argument("--format", choices=("json", "csv"), help="report format")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = {"experiment": args.experiment, "seed": args.seed, "n": args.n,
                 "replicas": args.replicas, "workers": args.workers, "preset": args.preset,
                 "out": args.out, "format": args.format}
    try:
        cfg = load_config(args.config, overrides) if args.config else parse_config({}, overrides)
        report = run(cfg)
        log.info("%s finished in %.3f s", cfg.experiment, report.wall_time)
        fmt, path = cfg.output["format"], cfg.output.get("path")
        if path:
            export(report, fmt, path)
        else:
            sys.stdout.write(render(report, fmt))
    except (ConfigError, ExperimentError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if report.status != "pass":
        print(f"status: {report.status}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
