"""Base learners: an optimistic exponential-weights linear bandit learner, an
expert-aggregation learner for finite contextual classes, and a trivial fixed
player.

All learners speak the same narrow protocol.  `propose(context)` returns an
index into the learner's own action set (sampled from its current play
distribution); `observe(reward, observed)` feeds back the masked channel for
the learner's own last proposal.  When `observed` is False the round's reward
was withheld (the balancing layer sampled a different learner) and the learner
must compensate through the importance weight 1 / rho it was constructed with.

Actions carry optional link metadata.  A linked action is a synthetic
indicator whose reward is, by convention, whatever the delegate learner's own
proposal earns this round; the balancing layer resolves chains of links
before playing.  `link_target` and `shared_action` translate between a
learner's local indexing and the shared environment indexing.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np

from ._kernels import observe_core, propose_core
from .core import ActionSet, Context
from .design import DesignResult, optimal_design

__all__ = [
    "BaseLearner",
    "GeometricHedge",
    "Exp4",
    "FixedPolicyLearner",
    "geo_schedule",
    "make_extended_geo_hedge",
]


def _sample_index(rng: np.random.Generator, p: np.ndarray) -> int:
    u = rng.random()
    k = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return min(k, len(p) - 1)


class BaseLearner(ABC):
    """Contract shared by every base learner.

    Attributes
    ----------
    rho : float
        Probability with which this learner's rounds are observed; fixed at
        construction and used for importance weighting internally.
    reward_view : str
        "unit" if observe expects protocol rewards in [0, 1], "pm1" for the
        affine [-1, 1] view.
    """

    rho: float = 1.0
    reward_view: str = "unit"

    @abstractmethod
    def propose(self, context: Context) -> int:
        """Sample and return the index of this round's proposed action."""

    @abstractmethod
    def observe(self, reward: float, observed: bool) -> None:
        """Feed back the (possibly withheld) reward for the last proposal."""

    @abstractmethod
    def restart(self, delta: float) -> None:
        """Reset all learned state; keep the action set and random stream."""

    @abstractmethod
    def complexity(self) -> float:
        """The complexity number R >= 1 this learner claims for its class."""

    def link_target(self, local_index: int):
        """Delegate learner index if the local action is linked, else None."""
        return None

    def shared_action(self, local_index: int) -> int:
        """Shared-environment index of a local real action."""
        return local_index


def geo_schedule(t: int, dim: int, a_count: int, rho: float, delta: float,
                 c_eta: float = 1.0, prev_eta: float = math.inf):
    """Exploration and learning rates for GeometricHedge at round t.

    Returns (gamma, eta).  The raw eta formula is not monotone in t (it
    rises while gamma sits at its 1/2 cap), and the regret analysis needs a
    nonincreasing learning rate, so callers thread the previous eta through
    `prev_eta` and the returned value is the running minimum.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    log_term = math.log(a_count) * math.log(t / delta)
    gamma = min(math.sqrt(dim * log_term / (rho * t)), 0.5)
    eta = c_eta * rho * gamma / (dim + math.sqrt(dim / t) * math.sqrt(rho * log_term))
    return gamma, min(eta, prev_eta)


class GeometricHedge(BaseLearner):
    """Exponential weights over actions in R^d with optimistic linear reward
    estimates and a fixed-design exploration mixture.

    Each round the play distribution is (1 - gamma_t) * softmax(eta_t * S)
    mixed with gamma_t of an eps-optimal exploration design, where S
    accumulates estimated rewards.  After observing the masked channel the
    learner forms the importance-weighted least-squares estimate
    covariance^{-1} a_t * reward / rho for the parameter, evaluates it on all
    actions, and adds a leverage-proportional optimism bonus; unobserved
    rounds contribute the bonus alone.

    Rewards must arrive on the [-1, 1] scale so that expected reward is
    exactly linear in the action.
    """

    reward_view = "pm1"

    def __init__(self, actions, delta: float, rho: float = 1.0,
                 rng: np.random.Generator | None = None, c_eta: float = 1.0,
                 eps_design: float = 0.05, complexity: float | None = None,
                 shared_ids=None):
        if isinstance(actions, ActionSet):
            self.actions = actions
        else:
            self.actions = ActionSet(actions)
        self.A = self.actions.points
        self.n, self.d = self.A.shape
        if self.n < 2:
            raise ValueError("need at least 2 actions")
        self.delta = float(delta)
        self.rho = float(rho)
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        self.c_eta = float(c_eta)
        self.eps_design = float(eps_design)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.A = np.ascontiguousarray(self.A)
        self.design: DesignResult = optimal_design(self.A, eps=eps_design)
        self._dw = np.ascontiguousarray(self.design.weights)
        self._complexity = (float(complexity) if complexity is not None
                            else max(1.0, math.sqrt(self.d * math.log(self.n))))
        self._links = list(self.actions.linked_to)
        if shared_ids is None:
            shared_ids = [i if tag is None else -1
                          for i, tag in enumerate(self._links)]
        self._shared = list(shared_ids)
        self._lev_bound = self.d * (1.0 + eps_design)
        self.restart(delta)

    def restart(self, delta: float) -> None:
        self.delta = float(delta)
        self.S = np.zeros(self.n)
        self.t = 1
        self._eta_floor = math.inf
        self._pending = None
        self.eta_clip_count = 0
        self.max_identity_error = 0.0

    def complexity(self) -> float:
        return self._complexity

    def link_target(self, local_index: int):
        return self._links[local_index]

    def shared_action(self, local_index: int) -> int:
        s = self._shared[local_index]
        if s < 0:
            raise ValueError("action %d is linked, it has no shared index" % local_index)
        return s

    def _round_state(self, u: float):
        gamma, eta = geo_schedule(self.t, self.d, self.n, self.rho, self.delta,
                                  self.c_eta, prev_eta=self._eta_floor)
        p, x, lev, ident, k = propose_core(self.A, self.S, self._dw,
                                           eta, gamma, u)
        err = abs(ident - self.d)
        if err > self.max_identity_error:
            self.max_identity_error = err
        self._pending = (gamma, eta, x, lev)
        return p, int(k)

    def distribution(self) -> np.ndarray:
        """Compute and cache this round's play distribution."""
        p, _ = self._round_state(2.0)  # u > 1 so the sample index is unused
        return p

    def propose(self, context: Context = None) -> int:
        u = self.rng.random()
        _, k = self._round_state(u)
        self._played = k
        return k

    def observe(self, reward: float, observed: bool) -> None:
        gamma, eta, x, lev = self._pending
        t = self.t
        k = self._played
        bonus = 2.0 * math.sqrt(
            math.log(12.0 * t * t * self.n / self.delta) / (self.rho * self.d * t)
        )
        scaled = reward / self.rho if observed else 0.0
        m = observe_core(self.A, x, lev, self.S, k, scaled, bonus)
        cap = self._lev_bound / gamma
        if m > cap / self.rho + bonus * cap + 1e-6:
            raise AssertionError(
                "reward estimate %.3g escaped the leverage envelope %.3g"
                % (m, cap / self.rho + bonus * cap)
            )
        # future learning rates must keep every exponent increment in [-1, 1]
        if m > 0.0 and 1.0 / m < min(self._eta_floor, eta):
            self._eta_floor = 1.0 / m
            self.eta_clip_count += 1
        else:
            self._eta_floor = eta
        self.t = t + 1
        self._pending = None


def make_extended_geo_hedge(base_points, link_targets, delta: float,
                            rho: float = 1.0,
                            rng: np.random.Generator | None = None,
                            c_eta: float = 1.0, eps_design: float = 0.05,
                            complexity: float | None = None,
                            shared_ids=None) -> GeometricHedge:
    """Build a GeometricHedge on the extension of `base_points`.

    The base actions are zero-padded into d + k dimensions and one unit
    vector is appended per entry of `link_targets`, tagged as linked to the
    corresponding learner index.  Default complexity is the base value
    sqrt(d ln n) plus one per link, matching the extension rule for this
    learner family; pass `complexity` to override.  `shared_ids` maps local
    real actions to the shared environment indexing (identity by default).
    """
    base = np.asarray(base_points, dtype=float)
    n, d = base.shape
    k = len(link_targets)
    pts = np.zeros((n + k, d + k))
    pts[:n, :d] = base
    for i in range(k):
        pts[n + i, d + i] = 1.0
    linked = [None] * n + [int(j) for j in link_targets]
    if complexity is None:
        complexity = max(1.0, math.sqrt(d * math.log(n))) + k
    if shared_ids is None:
        shared_ids = list(range(n)) + [-1] * k
    else:
        shared_ids = list(shared_ids) + [-1] * k
    return GeometricHedge(ActionSet(pts, linked), delta, rho=rho, rng=rng,
                          c_eta=c_eta, eps_design=eps_design,
                          complexity=complexity, shared_ids=shared_ids)


class Exp4(BaseLearner):
    """Exponential weights over a finite class of contextual experts.

    Experts are given as a (policies, contexts, actions) array of conditional
    play probabilities.  Updates use the implicit-exploration loss estimate
    mask * (1 - reward) / (rho * (p_t(a_t) + gamma_t)) credited to each expert
    in proportion to the probability it put on the played action; the
    smoothing term gamma_t keeps the estimates bounded, at the price of a
    small optimistic bias (Neu, 2015).  Rewards arrive on the [0, 1] scale.
    """

    reward_view = "unit"

    def __init__(self, tables, delta: float, rho: float = 1.0,
                 rng: np.random.Generator | None = None, c_eta: float = 1.0,
                 complexity: float | None = None):
        self.tables = np.asarray(tables, dtype=float)
        if self.tables.ndim != 3:
            raise ValueError("tables must have shape (policies, contexts, actions)")
        self.P, self.X, self.K = self.tables.shape
        if self.K < 2:
            raise ValueError("need at least 2 actions")
        if np.any(self.tables < 0) or not np.allclose(
                self.tables.sum(axis=2), 1.0, atol=1e-9):
            raise ValueError("expert rows must be probability distributions")
        self.delta = float(delta)
        self.rho = float(rho)
        self.c_eta = float(c_eta)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._complexity = (float(complexity) if complexity is not None
                            else max(1.0, math.sqrt(self.K * math.log(self.P))))
        self.restart(delta)

    def restart(self, delta: float) -> None:
        self.delta = float(delta)
        self.L = np.zeros(self.P)  # cumulative loss estimates per expert
        self.t = 1
        self._pending = None

    def complexity(self) -> float:
        return self._complexity

    def _rates(self, t: int):
        eta = self.c_eta * math.sqrt(self.rho * math.log(max(self.P, 2))
                                     / (self.K * t))
        gamma = eta * self.K / (2.0 * self.rho)
        return eta, gamma

    def propose(self, context: Context) -> int:
        x = context.token
        eta, gamma = self._rates(self.t)
        z = -eta * self.L
        z -= z.max()
        q = np.exp(z)
        q /= q.sum()
        p = q @ self.tables[:, x, :]
        k = _sample_index(self.rng, p)
        self._pending = (x, float(p[k]), gamma)
        self._played = k
        return k

    def observe(self, reward: float, observed: bool) -> None:
        x, p_played, gamma = self._pending
        if observed:
            loss_hat = (1.0 - reward) / (self.rho * (p_played + gamma))
            self.L += self.tables[:, x, self._played] * loss_hat
        self.t += 1
        self._pending = None


class FixedPolicyLearner(BaseLearner):
    """Plays one fixed policy forever and learns nothing.

    Useful as the committed arm during exploitation, and as a stand-in for a
    learner whose claimed guarantees do not actually hold.  `action` is a
    shared index; pass `table` (context token -> shared index) for a
    context-dependent fixed policy.
    """

    reward_view = "unit"

    def __init__(self, action: int = 0, complexity: float = 1.0,
                 rho: float = 1.0, table=None, policy_id: str | None = None):
        self.action = int(action)
        self.table = dict(table) if table is not None else None
        self.rho = float(rho)
        self._complexity = float(complexity)
        self.policy_id = policy_id

    def propose(self, context: Context) -> int:
        if self.table is not None:
            return self.table[context.token]
        return self.action

    def observe(self, reward: float, observed: bool) -> None:
        pass

    def restart(self, delta: float) -> None:
        pass

    def complexity(self) -> float:
        return self._complexity
