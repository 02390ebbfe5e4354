"""Command line entry point.

Subcommands: `run` executes a TOML config (flags override single fields),
`validate` checks a config without running, `version` prints the package
version.  Set ARBE_LOG=info or ARBE_LOG=debug for event tracing on stderr;
nothing is ever traced into the output files.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import __version__
from .harness import load_config, run_experiment, write_outputs


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arbe",
        description="Bandit model selection by adversarial regret balancing.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a TOML config")
    run_p.add_argument("--config", required=True, help="path to a TOML config")
    run_p.add_argument("--seed", type=int, help="run only this seed")
    run_p.add_argument("--horizon", type=int, help="override the horizon")
    run_p.add_argument("--out", help="override the output directory")
    run_p.add_argument("--algo", help="override the algorithm")
    run_p.add_argument("--env", help="override the environment kind")

    val_p = sub.add_parser("validate", help="check a config file")
    val_p.add_argument("--config", required=True, help="path to a TOML config")

    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return 0
    try:
        config = load_config(args.config)
        if args.command == "run":
            updates = {}
            if args.seed is not None:
                updates["seeds"] = (args.seed,)
            if args.horizon is not None:
                updates["horizon"] = args.horizon
            if args.out is not None:
                updates["out"] = args.out
            if args.algo is not None:
                updates["algorithm"] = args.algo
            if args.env is not None:
                updates["env"] = dataclasses.replace(config.env, kind=args.env)
            if updates:
                config = dataclasses.replace(config, **updates)
    except (ValueError, OSError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    if args.command == "validate":
        print("ok")
        return 0
    results = run_experiment(config)
    out_dir = config.out if config.out else "results"
    write_outputs(results, config, out_dir)
    print("wrote %d run(s) to %s" % (len(results), out_dir))
    return 0


if __name__ == "__main__":
    sys.exit(main())
