#!/usr/bin/env python3
"""Compare plain regret balancing against the gap/exploit pipeline.

Runs both algorithms on the same stochastic linear instance and reports the
pseudo-regret accumulated over the second half of the horizon, where the
exploit phase should be paying off.  The defaults finish in about a minute;
raise --seeds and --horizon for a full-scale comparison.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from arbe.harness import (
    Constants,
    EnvSpec,
    ExperimentConfig,
    run_experiment,
    write_outputs,
)

INSTANCE = EnvSpec(kind="stochastic_linear", dims=(2,), i_star=1, gap=0.2,
                   actions=6, env_seed=4)
CONSTANTS = Constants(c_w=0.85, c_v=0.9, c_k0=1.0, c_rho=0.05)


def window_pseudo_regret(res) -> float:
    """Pseudo-regret accumulated between T/2 and T (nearest logged rows)."""
    ts = res.columns["t"]
    half = min(range(len(ts)), key=lambda i: abs(ts[i] - ts[-1] // 2))
    return res.columns["pseudo_regret"][-1] - res.columns["pseudo_regret"][half]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=int, default=120_000)
    ap.add_argument("--seeds", type=int, default=5,
                    help="number of seeds, run as 1..N (default 5)")
    ap.add_argument("--out", help="write per-run CSVs and summaries here")
    args = ap.parse_args(argv)

    seeds = tuple(range(1, args.seeds + 1))
    runs = {}
    for algo in ("arbe_gap_bowb", "arbe"):
        cfg = ExperimentConfig(algorithm=algo, env=INSTANCE,
                               horizon=args.horizon, seeds=seeds, delta=0.05,
                               constants=CONSTANTS)
        t0 = time.time()
        runs[algo] = (cfg, run_experiment(cfg))
        print("%-14s %d run(s) in %.1fs" % (algo, len(seeds),
                                            time.time() - t0))

    ratios = []
    for bob, base in zip(runs["arbe_gap_bowb"][1], runs["arbe"][1]):
        ratio = window_pseudo_regret(bob) / window_pseudo_regret(base)
        ratios.append(ratio)
        gap = "-" if bob.gap_estimate is None else "%.3f" % bob.gap_estimate
        print("seed %2d  t_gap=%-8s gap_estimate=%-6s window ratio %.3f"
              % (bob.seed, bob.t_gap, gap, ratio))
    print("median second-half pseudo-regret ratio: %.3f"
          % float(np.median(ratios)))

    if args.out:
        for algo, (cfg, results) in runs.items():
            write_outputs(results, cfg, str(Path(args.out) / algo))
        print("wrote outputs under %s" % args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
