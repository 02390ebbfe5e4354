"""Experiment harness: configuration, run loop, regret tracking, outputs.

A run is fully determined by (config, seed): environment geometry comes from
the config's `env_seed`, while noise, learner sampling and meta decisions
draw from named substreams of the run seed.  Outputs are one CSV per run
plus one JSON summary; formats are fixed (header row, column order, 17
significant digits, LF endings) so byte-level comparisons are meaningful.

CSV columns, in order: t, reward, regret, pseudo_regret, phase, active_s,
candidate_policy, gap_estimate, event.  Empty fields mean not-applicable.
Summary keys: artifact_version, config, runs; each run carries seed,
final_regret, final_pseudo_regret, t_gap, gap_estimate and event_counts.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import sys
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import rng_for
from .envs import (
    ContextualFiniteEnv,
    ShiftedMeansEnv,
    make_adversarial_linear,
    make_contextual_finite,
    make_mean_drop,
    make_stochastic_linear,
    make_switching_bowb,
)
from .learners import Exp4, GeometricHedge, make_extended_geo_hedge
from .meta import Arbe, BestOfBoth, Event, MetaParams, SlotSpec, StepResult

__all__ = [
    "Constants",
    "EnvSpec",
    "ExperimentConfig",
    "RunResult",
    "CSV_COLUMNS",
    "ALGORITHMS",
    "load_config",
    "config_from_dict",
    "linear_slot_specs",
    "run_experiment",
    "write_outputs",
]

ALGORITHMS = ("arbe", "arbe_gap_bowb", "geo_hedge_solo", "exp4_solo")
ARTIFACT_VERSION = 1
CSV_COLUMNS = ("t", "reward", "regret", "pseudo_regret", "phase", "active_s",
               "candidate_policy", "gap_estimate", "event")

log = logging.getLogger("arbe")


@dataclass(frozen=True)
class Constants:
    """Tunable constants, mirrored into the balancing layer and learners."""

    c_w: float = 1.0
    c_v: float = 1.0
    c_k0: float = 6.0
    c_rho: float = 1.0
    conc_scale: float = 1.0
    c_eta: float = 1.0
    eps_design: float = 0.05
    restart_factor: float = 3.0
    union_exact: bool = False

    def meta_params(self) -> MetaParams:
        return MetaParams(conc_scale=self.conc_scale,
                          restart_factor=self.restart_factor,
                          union_exact=self.union_exact,
                          c_w=self.c_w, c_v=self.c_v,
                          c_k0=self.c_k0, c_rho=self.c_rho)


@dataclass(frozen=True)
class EnvSpec:
    """Environment description as it appears in config files.

    `kind` selects the family; the remaining fields are read per kind and
    validated in `build`.  `env_seed` fixes the instance geometry across
    run seeds.
    """

    kind: str
    dims: tuple[int, ...] = (2, 4)
    i_star: int = 1
    gap: float = 0.1
    actions: int = 8
    noise_sd: float = 0.05
    env_seed: int = 0
    script: str = "oblivious-sequence"
    t_switch: int = 0
    period: int = 512
    drop: float = 0.0
    post_script: str = "mean-drop"
    policies: int = 16
    contexts: int = 4

    def build(self):
        if self.kind == "stochastic_linear":
            return make_stochastic_linear(self.dims, self.i_star, self.gap,
                                          self.actions, self.noise_sd,
                                          self.env_seed)
        if self.kind == "adversarial_linear":
            return make_adversarial_linear(self.dims, self.actions, self.script,
                                           self.env_seed,
                                           t_switch=self.t_switch or None,
                                           period=self.period)
        if self.kind == "switching":
            if self.t_switch < 1:
                raise ValueError("switching environment needs t_switch >= 1")
            pre = make_stochastic_linear(self.dims, self.i_star, self.gap,
                                         self.actions, self.noise_sd,
                                         self.env_seed)
            if self.post_script == "mean-drop":
                if self.drop <= 0.0:
                    raise ValueError("mean-drop needs a positive drop")
                post = make_mean_drop(pre, self.drop)
            elif self.post_script == "negate":
                post = ShiftedMeansEnv(pre, 1.0 - 2.0 * pre.means)
            else:
                raise ValueError("unknown post_script %r" % self.post_script)
            return make_switching_bowb(pre, self.t_switch, post)
        if self.kind == "contextual_finite":
            return make_contextual_finite(self.policies, self.actions,
                                          self.contexts, self.env_seed)
        raise ValueError("unknown environment kind %r" % self.kind)


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    env: EnvSpec
    horizon: int
    seeds: tuple[int, ...]
    delta: float = 0.05
    constants: Constants = field(default_factory=Constants)
    out: str | None = None
    log_every: int | None = None
    learner_rho: float = 1.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError("unknown algorithm %r" % self.algorithm)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not 0.0 < self.learner_rho <= 1.0:
            raise ValueError("learner_rho must lie in (0, 1]")
        if self.log_every is not None and self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        linear = {"stochastic_linear", "adversarial_linear", "switching"}
        if self.algorithm in ("arbe", "arbe_gap_bowb", "geo_hedge_solo"):
            if self.env.kind not in linear:
                raise ValueError("%s needs a linear environment" % self.algorithm)
        else:
            if self.env.kind != "contextual_finite":
                raise ValueError("exp4_solo needs a contextual_finite environment")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["env"]["dims"] = list(self.env.dims)
        d["seeds"] = list(self.seeds)
        return d


def _check_keys(table: dict, allowed, where: str) -> None:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ValueError("unknown key(s) %s in %s" % (", ".join(unknown), where))


def config_from_dict(data: dict) -> ExperimentConfig:
    top = {"algorithm", "horizon", "seeds", "delta", "out", "log_every",
           "learner_rho", "environment", "constants"}
    _check_keys(data, top, "config")
    for key in ("algorithm", "horizon", "seeds"):
        if key not in data:
            raise ValueError("config is missing %r" % key)
    if "environment" not in data:
        raise ValueError("config is missing the [environment] table")
    env_d = dict(data["environment"])
    env_fields = {f.name for f in dataclasses.fields(EnvSpec)}
    _check_keys(env_d, env_fields, "[environment]")
    if "kind" not in env_d:
        raise ValueError("[environment] is missing 'kind'")
    if "dims" in env_d:
        env_d["dims"] = tuple(int(x) for x in env_d["dims"])
    env = EnvSpec(**env_d)
    const_d = dict(data.get("constants", {}))
    const_fields = {f.name for f in dataclasses.fields(Constants)}
    _check_keys(const_d, const_fields, "[constants]")
    constants = Constants(**const_d)
    return ExperimentConfig(
        algorithm=str(data["algorithm"]),
        env=env,
        horizon=int(data["horizon"]),
        seeds=tuple(int(s) for s in data["seeds"]),
        delta=float(data.get("delta", 0.05)),
        constants=constants,
        out=data.get("out"),
        log_every=data.get("log_every"),
        learner_rho=float(data.get("learner_rho", 1.0)),
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        import tomllib as toml
    except ImportError:  # python < 3.11
        import tomli as toml
    with open(path, "rb") as f:
        data = toml.load(f)
    return config_from_dict(data)


def linear_slot_specs(env, constants: Constants) -> list[SlotSpec]:
    """One slot per ladder prefix of a linear environment's action features."""
    points = env.points
    n = points.shape[0]
    specs = []
    for d in env.dims:
        base = points[:, :d]
        complexity = max(1.0, math.sqrt(d * math.log(n)))

        def factory(link_targets, delta, rho, rng, exclude_shared=None,
                    _base=base):
            pts = _base
            ids = None
            if exclude_shared is not None:
                keep = [i for i in range(pts.shape[0]) if i != exclude_shared]
                pts = pts[keep]
                ids = keep
            return make_extended_geo_hedge(
                pts, link_targets, delta, rho=rho, rng=rng,
                c_eta=constants.c_eta, eps_design=constants.eps_design,
                shared_ids=ids)

        specs.append(SlotSpec(complexity=complexity, factory=factory))
    return specs


class SoloDriver:
    """Single learner, optional Bernoulli observation masking."""

    def __init__(self, learner, rho: float, seed: int):
        self.learner = learner
        self.rho = float(rho)
        self.mask_rng = rng_for(seed, "solo.mask")
        self.t = 0

    def step(self, context, realize) -> StepResult:
        self.t += 1
        k = self.learner.propose(context)
        action = self.learner.shared_action(k)
        reward = realize(action)
        observed = self.rho >= 1.0 or self.mask_rng.random() < self.rho
        if self.learner.reward_view == "pm1":
            self.learner.observe(2.0 * reward - 1.0 if observed else 0.0, observed)
        else:
            self.learner.observe(reward if observed else 0.0, observed)
        return StepResult(t=self.t, action=action, reward=reward, phase=None,
                          active_s=1)


def _make_driver(config: ExperimentConfig, env, seed: int):
    c = config.constants
    if config.algorithm == "arbe":
        return Arbe(linear_slot_specs(env, c), config.delta, seed,
                    c.meta_params())
    if config.algorithm == "arbe_gap_bowb":
        return BestOfBoth(linear_slot_specs(env, c), config.delta, seed,
                          c.meta_params())
    if config.algorithm == "geo_hedge_solo":
        learner = GeometricHedge(env.points, config.delta,
                                 rho=config.learner_rho,
                                 rng=rng_for(seed, "solo.learner"),
                                 c_eta=c.c_eta, eps_design=c.eps_design)
        return SoloDriver(learner, config.learner_rho, seed)
    learner = Exp4(env.learner_tables(), config.delta, rho=config.learner_rho,
                   rng=rng_for(seed, "solo.learner"), c_eta=c.c_eta)
    return SoloDriver(learner, config.learner_rho, seed)


@dataclass
class RunResult:
    seed: int
    columns: dict
    events: list
    final_regret: float
    final_pseudo_regret: float | None
    t_gap: int | None
    gap_estimate: float | None

    def event_counts(self) -> dict:
        return dict(Counter(ev.kind for ev in self.events))


def _fmt_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _fmt_event(ev: Event) -> str:
    if not ev.info:
        return ev.kind
    parts = ["%s=%s" % (k, _fmt_value(ev.info[k])) for k in sorted(ev.info)]
    return "%s:%s" % (ev.kind, ";".join(parts))


def _phase_label(algorithm: str, res: StepResult) -> str:
    if algorithm == "arbe_gap_bowb":
        return res.phase.value
    if algorithm == "arbe":
        return "arbe"
    return "solo"


def cadence_for(horizon: int, log_every: int | None) -> int:
    if log_every is not None:
        return int(log_every)
    return 1 if horizon <= 100_000 else 16


def _run_one(config: ExperimentConfig, env, seed: int) -> RunResult:
    session = env.session(seed)
    driver = _make_driver(config, env, seed)
    contextual = isinstance(env, ContextualFiniteEnv)
    supports_pseudo = env.supports_pseudo_regret
    trace = log.isEnabledFor(logging.INFO)

    if contextual:
        cum_best = np.zeros(env.policy_count)
        policy_actions = env.policy_actions
    else:
        cum_best = np.zeros(env.action_count)
    realized = 0.0
    pseudo = 0.0
    cadence = cadence_for(config.horizon, config.log_every)
    cols = {name: [] for name in CSV_COLUMNS}
    events_all: list[Event] = []
    t_gap = None
    gap_est = None

    for t in range(1, config.horizon + 1):
        ctx = session.context(t)
        rvec = session.rewards(t)
        res = driver.step(ctx, lambda a: float(rvec[a]))
        realized += res.reward
        if contextual:
            cum_best += rvec[policy_actions[:, ctx.token]]
        else:
            cum_best += rvec
        if supports_pseudo:
            pseudo += session.best_mean(t) - float(session.means(t)[res.action])
        if res.events:
            events_all.extend(res.events)
            for ev in res.events:
                if ev.kind == "gap_found":
                    t_gap = ev.t
                    gap_est = float(ev.info["gap"])
                if trace:
                    log.info("seed=%d t=%d %s", seed, ev.t, _fmt_event(ev))
        if t % cadence == 0 or t == config.horizon:
            regret = float(cum_best.max()) - realized
            cols["t"].append(t)
            cols["reward"].append(res.reward)
            cols["regret"].append(regret)
            cols["pseudo_regret"].append(pseudo if supports_pseudo else None)
            cols["phase"].append(_phase_label(config.algorithm, res))
            cols["active_s"].append(res.active_s if res.active_s > 0 else None)
            cols["candidate_policy"].append(res.candidate)
            cols["gap_estimate"].append(res.gap_estimate)
            cols["event"].append("|".join(_fmt_event(e) for e in res.events)
                                 if res.events else None)
    return RunResult(
        seed=seed,
        columns=cols,
        events=events_all,
        final_regret=cols["regret"][-1],
        final_pseudo_regret=pseudo if supports_pseudo else None,
        t_gap=t_gap,
        gap_estimate=gap_est,
    )


def run_experiment(config: ExperimentConfig) -> list[RunResult]:
    """Run every seed of the config; one result per seed, deterministic."""
    if os.environ.get("ARBE_LOG") in ("debug", "info") and not log.handlers:
        level = logging.DEBUG if os.environ["ARBE_LOG"] == "debug" else logging.INFO
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("arbe: %(message)s"))
        log.addHandler(handler)
        log.setLevel(level)
    env = config.env.build()
    return [_run_one(config, env, seed) for seed in config.seeds]


def write_outputs(results: list[RunResult], config: ExperimentConfig,
                  out_dir: str) -> None:
    """One CSV per run (seed_<S>.csv) plus summary.json in `out_dir`."""
    os.makedirs(out_dir, exist_ok=True)
    for r in results:
        path = os.path.join(out_dir, "seed_%d.csv" % r.seed)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(",".join(CSV_COLUMNS) + "\n")
            n_rows = len(r.columns["t"])
            for i in range(n_rows):
                f.write(",".join(_fmt_value(r.columns[c][i])
                                 for c in CSV_COLUMNS) + "\n")
    summary = {
        "artifact_version": ARTIFACT_VERSION,
        "config": config.to_dict(),
        "runs": [
            {
                "seed": r.seed,
                "final_regret": r.final_regret,
                "final_pseudo_regret": r.final_pseudo_regret,
                "t_gap": r.t_gap,
                "gap_estimate": r.gap_estimate,
                "event_counts": r.event_counts(),
            }
            for r in results
        ],
    }
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
