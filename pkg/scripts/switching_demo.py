#!/usr/bin/env python3
"""Exploit-phase tripwire demo on a switching environment.

Stage one probes the stationary instance until the gap certificate fires.
Stage two replays the same instance but drops the certified policy's mean
by three estimated gaps shortly after certification; the exploit monitor
must return an adversarial verdict and hand control back to the balancing
layer within about 50 / gap_estimate^2 rounds.
"""

import argparse
import math

from arbe.harness import Constants, EnvSpec, ExperimentConfig, run_experiment

STATIONARY = EnvSpec(kind="stochastic_linear", dims=(2,), i_star=1, gap=0.2,
                     actions=6, env_seed=4)
CONSTANTS = Constants(c_w=0.85, c_v=0.35, c_k0=6.0, c_rho=1.0)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--horizon", type=int, default=200_000,
                    help="probe horizon for the certification stage")
    args = ap.parse_args(argv)

    probe_cfg = ExperimentConfig(algorithm="arbe_gap_bowb", env=STATIONARY,
                                 horizon=args.horizon, seeds=(args.seed,),
                                 delta=0.05, constants=CONSTANTS,
                                 log_every=16)
    probe = run_experiment(probe_cfg)[0]
    if probe.t_gap is None:
        print("no gap certificate before t=%d; try a longer --horizon"
              % args.horizon)
        return 1
    ghat = probe.gap_estimate
    print("probe: gap %.3f certified at t=%d" % (ghat, probe.t_gap))

    t_switch = probe.t_gap + 200
    budget = int(math.ceil(50.0 / ghat ** 2))
    env = EnvSpec(kind="switching", dims=(2,), i_star=1, gap=0.2, actions=6,
                  env_seed=4, t_switch=t_switch, drop=3.0 * ghat)
    cfg = ExperimentConfig(algorithm="arbe_gap_bowb", env=env,
                          horizon=t_switch + budget, seeds=(args.seed,),
                          delta=0.05, constants=CONSTANTS, log_every=16)
    run = run_experiment(cfg)[0]
    verdict = next((e for e in run.events if e.kind == "exploit_return"), None)
    if verdict is None:
        print("switch at t=%d not detected within %d rounds"
              % (t_switch, budget))
        return 1
    print("switch at t=%d detected at t=%d (delay %d, budget %d)"
          % (t_switch, verdict.t, verdict.t - t_switch, budget))
    print("final phase: %s" % run.columns["phase"][-1])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
