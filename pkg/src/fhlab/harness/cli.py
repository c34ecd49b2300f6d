"""Command line entry point: ``fhlab <subcommand> --config PATH [--seed U64] [--workers K] [--out DIR]``.

Exit codes: 0 all rows pass, 1 tolerance failure, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError, ExperimentError, FHLabError
from .config import load_config, parse_config
from .experiments import run_experiment
from .report import emit_outputs

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
SUBCOMMANDS = ("predict", "simulate", "compare", "kernel", "gmc", "maxstat", "selftest")

log = logging.getLogger("fhlab")


def _u64(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fhlab", description="Fisher-Hartwig prediction vs Monte Carlo lab")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=f"run a {name} experiment")
        sp.add_argument("--config", required=(name != "selftest"), help="JSON experiment config")
        sp.add_argument("--seed", type=_u64, help="master seed (FHLAB_SEED overrides)")
        sp.add_argument("--workers", type=int, help="worker processes for sampling")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        over = {"seed": args.seed, "workers": args.workers, "output": args.out}
        if args.config:
            cfg = load_config(args.config, **over)
        else:
            cfg = parse_config({"experiment": "selftest", "seed": 0}, **over)
        if cfg.experiment != args.command:
            raise ConfigError(f"config is a {cfg.experiment!r} experiment, not {args.command!r}", "/experiment")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_experiment(cfg)
        paths = emit_outputs(report, cfg.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExperimentError, FHLabError, OSError, RuntimeError, ValueError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    n_fail = sum(not r["pass"] for r in report.rows)
    log.info("wrote %s", ", ".join(paths.values()))
    print(f"{cfg.experiment}: {len(report.rows) - n_fail}/{len(report.rows)} rows pass; report in {cfg.output}")
    return EXIT_PASS if n_fail == 0 else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
