"""Simulation environments.

Linear environments share one action set: unit vectors in R^{d_M} whose
projections onto every ladder prefix dimension keep full rank, so the same
actions serve every learner in a nested ladder.  Protocol rewards live in
[0, 1] via the affine map r = (a . w + 1) / 2 with |a . w| <= 1 guaranteed
by construction, which keeps expected reward exactly linear in the action on
the [-1, 1] view.

Sessions are the per-run handle: deterministic given (instance, run seed),
with per-block noise substreams so reward lookups are reproducible in any
access order.  `rewards(t)` realizes the full per-action reward vector of
round t; the harness both plays from it and tracks regret against it, so the
scalar channel and the oracle agree by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Context, UNIT_CONTEXT, rng_for

__all__ = [
    "EnvBuildError",
    "StochasticLinearEnv",
    "AdversarialLinearEnv",
    "ShiftedMeansEnv",
    "SwitchingEnv",
    "ContextualFiniteEnv",
    "make_stochastic_linear",
    "make_adversarial_linear",
    "make_mean_drop",
    "make_switching_bowb",
    "make_contextual_finite",
]

_BLOCK = 4096
_MAX_TRIES = 200


class EnvBuildError(RuntimeError):
    """Raised when an environment cannot be constructed as requested."""


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    pts = rng.standard_normal((n, d))
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return pts / norms


def _sample_actions(rng: np.random.Generator, n: int, dims) -> np.ndarray:
    """Unit actions whose projection onto each prefix in `dims` has full rank."""
    d_full = dims[-1]
    if n < d_full:
        raise ValueError("need at least %d actions to span R^%d" % (d_full, d_full))
    for _ in range(_MAX_TRIES):
        pts = _unit_rows(rng, n, d_full)
        if all(np.linalg.matrix_rank(pts[:, :d]) == d for d in dims):
            return pts
    raise EnvBuildError("could not sample a full-rank action set")


def _margin(points: np.ndarray, w: np.ndarray, best: int) -> float:
    scores = points @ w
    others = np.delete(scores, best)
    return float(scores[best] - others.max())


@dataclass
class _LinearSession:
    env: object
    run_seed: int

    def __post_init__(self):
        self._blocks = {}
        self._best = None

    def context(self, t: int) -> Context:
        return UNIT_CONTEXT

    def means(self, t: int) -> np.ndarray:
        return self.env.means_at(t)

    def best_mean(self, t: int) -> float:
        if self.env.stationary_means:
            if self._best is None:
                self._best = float(self.env.means_at(1).max())
            return self._best
        return float(self.env.means_at(t).max())

    def rewards(self, t: int) -> np.ndarray:
        if self.env.noise_sd == 0.0:
            return self.env.means_at(t)
        b, off = divmod(t - 1, _BLOCK)
        block = self._blocks.get(b)
        if block is None:
            block = self._reward_block(b)
            self._blocks[b] = block
            self._blocks = {k: v for k, v in self._blocks.items() if k >= b - 1}
        return block[off]

    def _reward_block(self, b: int) -> np.ndarray:
        """Means plus truncated Gaussian noise, kept inside [0, 1].

        Noisy environments have stationary means (the adversarial scripts are
        noiseless), so one mean vector serves the whole block.
        """
        env = self.env
        assert env.stationary_means
        rng = rng_for(self.run_seed, "env.noise.b%d" % b)
        noise = rng.standard_normal((_BLOCK, env.action_count)) * env.noise_sd
        mu = env.means_at(b * _BLOCK + 1)
        for _ in range(_MAX_TRIES):
            lo = noise < -mu
            hi = noise > 1.0 - mu
            bad = lo | hi
            count = int(bad.sum())
            if count == 0:
                return mu + noise
            noise[bad] = rng.standard_normal(count) * env.noise_sd
        raise EnvBuildError(
            "noise truncation did not converge; means too close to the boundary"
        )


class StochasticLinearEnv:
    """Fixed linear reward vector, truncated Gaussian noise, known gap."""

    kind = "stochastic_linear"
    supports_pseudo_regret = True
    stationary_means = True

    def __init__(self, points, omega, dims, i_star, gap, noise_sd):
        self.points = np.asarray(points, dtype=float)
        self.omega = np.asarray(omega, dtype=float)
        self.dims = tuple(int(d) for d in dims)
        self.i_star = int(i_star)
        self.gap = float(gap)
        self.noise_sd = float(noise_sd)
        self.action_count = self.points.shape[0]
        self.means = (self.points @ self.omega + 1.0) / 2.0
        self.best_action = int(np.argmax(self.means))

    def means_at(self, t: int) -> np.ndarray:
        return self.means

    def session(self, run_seed: int) -> _LinearSession:
        return _LinearSession(self, run_seed)


def make_stochastic_linear(dims, i_star: int, target_gap: float,
                           action_count: int, noise_sd: float = 0.05,
                           seed: int = 0) -> StochasticLinearEnv:
    """Build a nested stochastic linear instance with an exact top gap.

    `dims` is the increasing ladder of prefix dimensions; classes at index
    >= i_star are well specified (the reward vector is supported on the
    first dims[i_star - 1] coordinates) and classes below are checked to be
    genuinely misspecified.  The unique best action beats the runner-up by
    exactly `target_gap` in protocol units, to within 1e-9, adjusted by
    moving the reward vector along the best action's direction.
    """
    dims = tuple(int(d) for d in dims)
    if any(b <= a for a, b in zip(dims, dims[1:])) or dims[0] < 1:
        raise ValueError("dims must be strictly increasing and positive")
    if not 1 <= i_star <= len(dims):
        raise ValueError("i_star out of range")
    if not 0.0 < target_gap <= 0.5:
        raise ValueError("target_gap must lie in (0, 0.5]")
    d_star = dims[i_star - 1]
    inner_gap = 2.0 * target_gap  # protocol gap g means inner-product gap 2g
    rng = rng_for(seed, "env.geometry")

    for _ in range(_MAX_TRIES):
        pts = _sample_actions(rng, action_count, dims)
        w0 = np.zeros(dims[-1])
        w0[:d_star] = _unit_rows(rng, 1, d_star)[0] * 0.7
        best = int(np.argmax(pts @ w0))
        u = np.zeros(dims[-1])
        u[:d_star] = pts[best, :d_star]
        nu = np.linalg.norm(u)
        if nu < 1e-6:
            continue
        u /= nu

        # margin(alpha) = min over others of (a_best - a_j) . (w0 + alpha u)
        # is piecewise linear; locate alpha with margin == inner_gap by scan
        # plus bisection.
        def margin(alpha):
            return _margin(pts, w0 + alpha * u, best)

        lo, hi = None, None
        grid = np.linspace(-0.35, 0.35, 141)
        vals = [margin(a) for a in grid]
        for a, b, va, vb in zip(grid, grid[1:], vals, vals[1:]):
            if (va - inner_gap) * (vb - inner_gap) <= 0.0:
                lo, hi = float(a), float(b)
                break
        if lo is None:
            continue
        for _ in range(200):
            mid = (lo + hi) / 2.0
            if (margin(lo) - inner_gap) * (margin(mid) - inner_gap) <= 0.0:
                hi = mid
            else:
                lo = mid
        alpha = (lo + hi) / 2.0
        w = w0 + alpha * u
        if np.linalg.norm(w) > 1.0:
            continue
        scores = pts @ w
        new_best = int(np.argmax(scores))
        if new_best != best or abs(margin(alpha) - inner_gap) > 1e-9:
            continue
        # lower classes must be genuinely misspecified
        ok = True
        for d in dims[: i_star - 1]:
            theta, *_ = np.linalg.lstsq(pts[:, :d], scores, rcond=None)
            if np.max(np.abs(pts[:, :d] @ theta - scores)) < 1e-3:
                ok = False
                break
        if not ok:
            continue
        means = (scores + 1.0) / 2.0
        if means.min() < 4.0 * noise_sd or means.max() > 1.0 - 4.0 * noise_sd:
            # keep truncation mild so the noise stays honestly Gaussian-like
            continue
        return StochasticLinearEnv(pts, w, dims, i_star, target_gap, noise_sd)
    raise EnvBuildError(
        "failed to construct a stochastic instance with the requested gap"
    )


class AdversarialLinearEnv:
    """Scripted non-stationary linear rewards, no observation noise."""

    kind = "adversarial_linear"
    supports_pseudo_regret = False
    stationary_means = False
    noise_sd = 0.0

    def __init__(self, points, dims, script: str, omegas):
        self.points = np.asarray(points, dtype=float)
        self.dims = tuple(int(d) for d in dims)
        self.script = script
        self._omegas = omegas  # callable t -> w
        self.action_count = self.points.shape[0]

    def means_at(self, t: int) -> np.ndarray:
        return (self.points @ self._omegas(t) + 1.0) / 2.0

    def session(self, run_seed: int) -> _LinearSession:
        return _LinearSession(self, run_seed)


def make_adversarial_linear(dims, action_count: int, script: str = "oblivious-sequence",
                            seed: int = 0, t_switch: int | None = None,
                            period: int = 512) -> AdversarialLinearEnv:
    """Scripted adversarial linear environment on a shared nested action set.

    Scripts: "oblivious-sequence" draws an independent reward vector per
    `period`-round block (period 1 gives a fresh vector every round, the
    hardest case for tracking); "biased-sequence" splits the norm budget
    between a fixed preference vector and a per-block draw, so a persistent
    champion hides under unpredictable fluctuation; "phase-switching" uses
    one vector up to `t_switch` and another after; "sign-flipping" negates
    a fixed vector every `period` rounds.  All vectors have norm at most
    0.9, keeping rewards inside [0, 1].
    """
    dims = tuple(int(d) for d in dims)
    rng = rng_for(seed, "env.geometry")
    pts = _sample_actions(rng, action_count, dims)
    d = dims[-1]
    wrng = rng_for(seed, "env.omegas")

    if script == "oblivious-sequence":
        if period < 1:
            raise ValueError("period must be >= 1")
        per = int(period)
        cache: dict[int, np.ndarray] = {}

        def omegas(t: int) -> np.ndarray:
            b = (t - 1) // per
            w = cache.get(b)
            if w is None:
                w = _unit_rows(rng_for(seed, "env.omega.b%d" % b), 1, d)[0] * 0.9
                cache[b] = w
            return w

    elif script == "biased-sequence":
        if period < 1:
            raise ValueError("period must be >= 1")
        per = int(period)
        w_bias = _unit_rows(wrng, 1, d)[0] * 0.45
        cache = {}

        def omegas(t: int) -> np.ndarray:
            b = (t - 1) // per
            w = cache.get(b)
            if w is None:
                w = w_bias + _unit_rows(rng_for(seed, "env.omega.b%d" % b),
                                        1, d)[0] * 0.45
                cache[b] = w
            return w

    elif script == "phase-switching":
        if t_switch is None:
            raise ValueError("phase-switching needs t_switch")
        w_a = _unit_rows(wrng, 1, d)[0] * 0.9
        w_b = _unit_rows(wrng, 1, d)[0] * 0.9
        ts = int(t_switch)

        def omegas(t: int) -> np.ndarray:
            return w_a if t <= ts else w_b

    elif script == "sign-flipping":
        if period < 1:
            raise ValueError("period must be >= 1")
        w = _unit_rows(wrng, 1, d)[0] * 0.9
        per = int(period)

        def omegas(t: int) -> np.ndarray:
            return w if ((t - 1) // per) % 2 == 0 else -w

    else:
        raise ValueError("unknown script %r" % script)
    return AdversarialLinearEnv(pts, dims, script, omegas)


class ShiftedMeansEnv:
    """Same geometry as a stochastic instance, selected means shifted.

    The resulting reward function is generally not linear in the actions,
    which is the point: it plays the adversary after a switch.
    """

    kind = "shifted_means"
    supports_pseudo_regret = True
    stationary_means = True

    def __init__(self, base: StochasticLinearEnv, shifts):
        self.points = base.points
        self.dims = base.dims
        self.noise_sd = base.noise_sd
        self.action_count = base.action_count
        self.means = base.means + np.asarray(shifts, dtype=float)
        if self.means.min() < 0.0 or self.means.max() > 1.0:
            raise ValueError("shifted means leave [0, 1]")

    def means_at(self, t: int) -> np.ndarray:
        return self.means

    def session(self, run_seed: int) -> _LinearSession:
        return _LinearSession(self, run_seed)


def make_mean_drop(stochastic: StochasticLinearEnv, drop: float) -> ShiftedMeansEnv:
    """Post-switch environment where the best action's mean falls by `drop`."""
    shifts = np.zeros(stochastic.action_count)
    shifts[stochastic.best_action] = -float(drop)
    return ShiftedMeansEnv(stochastic, shifts)


class SwitchingEnv:
    """Stochastic until t_switch, scripted adversarial afterwards."""

    kind = "switching"
    supports_pseudo_regret = True  # per-round means stay well defined
    stationary_means = False

    def __init__(self, stochastic: StochasticLinearEnv, t_switch: int, post):
        if stochastic.points.shape != post.points.shape or \
                not np.allclose(stochastic.points, post.points):
            raise ValueError("pre and post environments must share the action set")
        self.pre = stochastic
        self.post = post
        self.t_switch = int(t_switch)
        self.points = stochastic.points
        self.dims = stochastic.dims
        self.action_count = stochastic.action_count
        self.gap = stochastic.gap

    @property
    def noise_sd(self):
        return self.pre.noise_sd

    def means_at(self, t: int) -> np.ndarray:
        if t <= self.t_switch:
            return self.pre.means_at(t)
        return self.post.means_at(t)

    def session(self, run_seed: int):
        return _SwitchingSession(self, run_seed)


class _SwitchingSession:
    def __init__(self, env: SwitchingEnv, run_seed: int):
        self.env = env
        self.pre = env.pre.session(run_seed)
        self.post = env.post.session(run_seed)

    def context(self, t: int) -> Context:
        return UNIT_CONTEXT

    def means(self, t: int) -> np.ndarray:
        return self.env.means_at(t)

    def best_mean(self, t: int) -> float:
        if t <= self.env.t_switch:
            return self.pre.best_mean(t)
        return self.post.best_mean(t)

    def rewards(self, t: int) -> np.ndarray:
        if t <= self.env.t_switch:
            return self.pre.rewards(t)
        return self.post.rewards(t)


def make_switching_bowb(stochastic: StochasticLinearEnv, t_switch: int,
                        post_adversary: AdversarialLinearEnv) -> SwitchingEnv:
    """Stitch a stochastic prefix to an adversarial tail on one action set."""
    return SwitchingEnv(stochastic, t_switch, post_adversary)


class ContextualFiniteEnv:
    """Finite contexts and actions, Bernoulli rewards, tabular policy class."""

    kind = "contextual_finite"
    supports_pseudo_regret = True

    def __init__(self, mean_table, policy_actions):
        self.mean_table = np.asarray(mean_table, dtype=float)  # (contexts, actions)
        self.policy_actions = np.asarray(policy_actions, dtype=int)  # (policies, contexts)
        self.context_count, self.action_count = self.mean_table.shape
        self.policy_count = self.policy_actions.shape[0]
        # value of each policy under uniform contexts
        ctx = np.arange(self.context_count)
        self.policy_values = self.mean_table[ctx[None, :], self.policy_actions].mean(axis=1)
        self.best_policy = int(np.argmax(self.policy_values))
        vals = np.sort(self.policy_values)
        self.gap = float(vals[-1] - vals[-2]) if len(vals) > 1 else 0.0

    def learner_tables(self) -> np.ndarray:
        """One-hot expert tables, shaped (policies, contexts, actions)."""
        tables = np.zeros((self.policy_count, self.context_count, self.action_count))
        for p in range(self.policy_count):
            for x in range(self.context_count):
                tables[p, x, self.policy_actions[p, x]] = 1.0
        return tables

    def session(self, run_seed: int):
        return _ContextualSession(self, run_seed)


class _ContextualSession:
    def __init__(self, env: ContextualFiniteEnv, run_seed: int):
        self.env = env
        self.run_seed = run_seed
        self._ctx_blocks: dict[int, np.ndarray] = {}

    def _block(self, b: int):
        blk = self._ctx_blocks.get(b)
        if blk is None:
            rng = rng_for(self.run_seed, "env.ctx.b%d" % b)
            ctx = rng.integers(0, self.env.context_count, size=_BLOCK)
            unif = rng.random((_BLOCK, self.env.action_count))
            blk = (ctx, unif)
            self._ctx_blocks[b] = blk
            self._ctx_blocks = {k: v for k, v in self._ctx_blocks.items() if k >= b - 1}
        return blk

    def context(self, t: int) -> Context:
        b, off = divmod(t - 1, _BLOCK)
        ctx, _ = self._block(b)
        return Context(int(ctx[off]))

    def means(self, t: int) -> np.ndarray:
        b, off = divmod(t - 1, _BLOCK)
        ctx, _ = self._block(b)
        return self.env.mean_table[ctx[off]]

    def best_mean(self, t: int) -> float:
        b, off = divmod(t - 1, _BLOCK)
        ctx, _ = self._block(b)
        x = int(ctx[off])
        best = self.env.policy_actions[self.env.best_policy, x]
        return float(self.env.mean_table[x, best])

    def rewards(self, t: int) -> np.ndarray:
        b, off = divmod(t - 1, _BLOCK)
        ctx, unif = self._block(b)
        return (unif[off] < self.env.mean_table[ctx[off]]).astype(float)


def make_contextual_finite(policy_count: int, action_count: int,
                           context_count: int, seed: int = 0) -> ContextualFiniteEnv:
    """Random tabular instance: iid uniform contexts, Bernoulli rewards.

    Policies are random deterministic context-to-action maps; the mean table
    is drawn once from the instance seed.  A single action admits no
    exploration problem and is rejected.
    """
    if action_count < 2:
        raise ValueError("need at least 2 actions")
    if policy_count < 2 or context_count < 1:
        raise ValueError("need at least 2 policies and 1 context")
    rng = rng_for(seed, "env.table")
    means = 0.2 + 0.6 * rng.random((context_count, action_count))
    policies = rng.integers(0, action_count, size=(policy_count, context_count))
    # make the greedy policy a member so the class has a clear optimum
    policies[0] = np.argmax(means, axis=1)
    return ContextualFiniteEnv(means, policies)
