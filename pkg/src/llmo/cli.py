"""Command line: ``llmo run | analyze | verify-theory``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config
from .errors import ConfigError


def _overrides(args):
    out = list(args.set or [])
    for flag, key in (("seeds", "seeds"), ("T", "T"), ("output", "output"), ("workers", "workers"),
                      ("fixtures", "fixtures")):
        v = getattr(args, flag, None)
        if v is not None:
            out.append(f"{key}={v}")
    if getattr(args, "sampler", None):
        out.append(f"samplers=[{args.sampler}]")
    return out


def _add_common(p):
    p.add_argument("config", help="YAML experiment file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field (dotted keys, YAML values); repeatable")
    p.add_argument("--output", "-o", help="output directory (overrides 'output')")


def build_parser():
    ap = argparse.ArgumentParser(prog="llmo", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    _add_common(run)
    run.add_argument("--seeds", help="seed list, e.g. '[0,1,2]'")
    run.add_argument("--T", type=int, help="iterations")
    run.add_argument("--fixtures", type=int, help="channel fixtures per seed")
    run.add_argument("--sampler", choices=("elitist", "lifo"))
    run.add_argument("--workers", type=int)
    run.add_argument("--dump-populations", action="store_true", help="write full populations to the JSON traces")
    run.add_argument("--allow-network", action="store_true", help="permit http agents to contact their endpoint")
    run.add_argument("--print-config", action="store_true", help="print the canonical config and exit")

    an = sub.add_parser("analyze", help="fit semilog gap slopes in a results directory")
    an.add_argument("directory")
    an.add_argument("--min-r2", type=float, default=0.99)

    th = sub.add_parser("verify-theory", help="run the Markov-chain verification suite")
    _add_common(th)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    from . import experiment

    try:
        if args.command == "analyze":
            report = experiment.analyze_rates(args.directory, args.min_r2)
            print(json.dumps(report, indent=1, sort_keys=True))
            return 0
        overrides = _overrides(args)
        if getattr(args, "dump_populations", False):
            overrides.append("dump_populations=true")
        cfg = load_config(args.config, overrides)
        if args.command == "run":
            if args.print_config:
                print(cfg.to_yaml(), end="")
                return 0
            result = experiment.run_experiment(cfg, allow_network=args.allow_network)
            print(json.dumps({"summary": result["summary"], "rates": result["rates"]}, indent=1, sort_keys=True))
            return 0
        report = experiment.verify_theory(cfg, out=cfg.output)
        for key in ("structure", "convergence", "eigen_init", "ensemble", "monte_carlo"):
            print(f"{key:12s} {'PASS' if report[key]['passed'] else 'FAIL'}")
        return 0 if report["passed"] else 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
