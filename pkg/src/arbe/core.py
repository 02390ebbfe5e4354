"""Domain types shared by learners, meta-algorithms, environments and harness.

Actions live in R^d as rows of a matrix; a policy is a point mass on one
action, a per-context probability table, or a linked indicator that delegates
to another learner's proposal for the round.  Policy classes carry a known
complexity number R >= 1 consumed by the balancing layer.

Rewards cross two unit systems.  Environments emit protocol rewards in [0, 1];
linear learners internally consume the affine [-1, 1] view (2r - 1), which
keeps linearity of r in the action exact.  The two helpers at the bottom are
the single place this mapping is defined.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "ActionSet",
    "Context",
    "UNIT_CONTEXT",
    "Policy",
    "PolicyClass",
    "ExtendedPolicyClass",
    "LearnerProposal",
    "ConfigurationError",
    "resolve_linked_action",
    "extend_policy_class",
    "remove_policy",
    "policy_expected_reward",
    "rng_for",
    "to_learner_view",
    "to_protocol_view",
]

_PROB_TOL = 1e-9


class ConfigurationError(ValueError):
    """Raised when wiring between learners / linked actions is malformed."""


@dataclass(frozen=True)
class Context:
    """Opaque context token; the unit value for plain (non-contextual) bandits."""

    token: int = 0


UNIT_CONTEXT = Context(0)


class ActionSet:
    """A finite set of actions in R^d.

    Parameters
    ----------
    points : array of shape (n, dim)
        Action coordinates, one row per action.
    linked_to : sequence of optional int
        For each action, the learner index it delegates to, or None for a
        real action.  Linked tags must reference strictly larger learner
        indices than the owner; that is validated where the set is wired
        into a learner slot, since the owner index is not known here.

    The full point set must span R^dim so that sampling covariances stay
    invertible.
    """

    __slots__ = ("points", "dim", "linked_to")

    def __init__(self, points, linked_to=None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("points must be a nonempty (n, dim) array")
        self.points = pts
        self.dim = pts.shape[1]
        if linked_to is None:
            linked_to = (None,) * pts.shape[0]
        if len(linked_to) != pts.shape[0]:
            raise ValueError("linked_to length must match point count")
        self.linked_to = tuple(linked_to)
        if np.linalg.matrix_rank(pts) < self.dim:
            raise ValueError("action set does not span R^%d" % self.dim)

    def __len__(self):
        return self.points.shape[0]

    @property
    def real_indices(self):
        return [i for i, tag in enumerate(self.linked_to) if tag is None]


@dataclass(frozen=True)
class Policy:
    """A policy: point mass, context table, or linked indicator.

    Exactly one of `action`, `table`, `linked` is set, matching `kind`.
    Table rows are probability vectors over actions, validated to sum to one
    within 1e-9 (larger violations are rejected, not renormalized, to surface
    upstream bugs).
    """

    id: str
    kind: str  # "point" | "table" | "linked"
    action: int | None = None
    linked: int | None = None
    table: Mapping[int, tuple[float, ...]] | None = None

    def __post_init__(self):
        if self.kind == "point":
            if self.action is None:
                raise ValueError("point policy needs an action index")
        elif self.kind == "linked":
            if self.linked is None:
                raise ValueError("linked policy needs a learner index")
        elif self.kind == "table":
            if not self.table:
                raise ValueError("table policy needs a context table")
            for token, row in self.table.items():
                arr = np.asarray(row, dtype=float)
                if (arr < -_PROB_TOL).any() or abs(arr.sum() - 1.0) > _PROB_TOL:
                    raise ValueError(
                        "policy %r: probabilities for context %r do not form "
                        "a distribution" % (self.id, token)
                    )
        else:
            raise ValueError("unknown policy kind %r" % self.kind)

    @staticmethod
    def point(action: int, id: str | None = None) -> "Policy":
        return Policy(id=id if id is not None else "a%d" % action,
                      kind="point", action=action)

    @staticmethod
    def linked_indicator(learner: int) -> "Policy":
        return Policy(id="link%d" % learner, kind="linked", linked=learner)

    @staticmethod
    def from_table(id: str, table: Mapping[int, Sequence[float]]) -> "Policy":
        frozen = {tok: tuple(float(x) for x in row) for tok, row in table.items()}
        return Policy(id=id, kind="table", table=frozen)

    def distribution(self, context: Context, n_actions: int) -> np.ndarray:
        """Probability vector over `n_actions` actions for this context."""
        p = np.zeros(n_actions)
        if self.kind == "point":
            p[self.action] = 1.0
        elif self.kind == "table":
            row = self.table[context.token]
            p[: len(row)] = row
        else:
            raise ConfigurationError(
                "linked policy %r has no action distribution; resolve the "
                "link first" % self.id
            )
        return p


@dataclass(frozen=True)
class PolicyClass:
    """An ordered set of policies with a known complexity R >= 1."""

    policies: tuple[Policy, ...]
    complexity: float

    def __post_init__(self):
        if self.complexity < 1.0:
            raise ValueError("policy class complexity must be >= 1")
        ids = [p.id for p in self.policies]
        if len(set(ids)) != len(ids):
            raise ValueError("policy ids must be unique within a class")

    def __len__(self):
        return len(self.policies)

    def ids(self):
        return [p.id for p in self.policies]


@dataclass(frozen=True)
class ExtendedPolicyClass:
    """A policy class augmented with linked-indicator policies.

    Extras reference strictly larger learner indices than `owner`; the
    default complexity rule adds one unit per extra.
    """

    base: PolicyClass
    owner: int
    extras: tuple[Policy, ...]
    complexity: float

    def __post_init__(self):
        for p in self.extras:
            if p.kind != "linked":
                raise ValueError("extras must be linked-indicator policies")
            if p.linked <= self.owner:
                raise ConfigurationError(
                    "extra %r references learner %d, not above owner %d"
                    % (p.id, p.linked, self.owner)
                )


@dataclass(frozen=True)
class LearnerProposal:
    """What a learner proposes for one round.

    `action` is an index into the shared action set when the proposal is a
    real action; `linked_to` is the target learner index when the proposal
    delegates.  Exactly one of the two is meaningful.
    """

    action: int = -1
    linked_to: int | None = None


def resolve_linked_action(proposals: Mapping[int, LearnerProposal],
                          start: int) -> tuple[int, list[int]]:
    """Follow delegation links from `start` until a real action is reached.

    Returns the final (shared) action index and the visited learner chain,
    starting at `start`.  Chains are strictly increasing in learner index,
    which guarantees termination; a tag pointing at or below the current
    learner is a wiring bug and raises ConfigurationError.
    """
    chain = [start]
    current = start
    while True:
        prop = proposals[current]
        if prop.linked_to is None:
            return prop.action, chain
        if prop.linked_to <= current:
            raise ConfigurationError(
                "learner %d proposes a link to %d; links must point to "
                "strictly larger indices" % (current, prop.linked_to)
            )
        current = prop.linked_to
        if current not in proposals:
            raise ConfigurationError("link points to unknown learner %d" % current)
        chain.append(current)


def extend_policy_class(base: PolicyClass, owner: int, top: int,
                        complexity: float | None = None) -> ExtendedPolicyClass:
    """Augment `base` with linked indicators for learners owner+1 .. top.

    The default complexity is base.complexity plus the number of extras;
    pass `complexity` to override (the appropriate value for a given learner
    family is a modelling choice, so it stays configurable).
    """
    if owner > top:
        raise ValueError("owner must be <= top")
    extras = tuple(Policy.linked_indicator(j) for j in range(owner + 1, top + 1))
    if complexity is None:
        complexity = base.complexity + len(extras)
    return ExtendedPolicyClass(base=base, owner=owner, extras=extras,
                               complexity=complexity)


def remove_policy(cls: PolicyClass, policy_id: str) -> PolicyClass:
    """Return `cls` without the policy `policy_id`; complexity unchanged."""
    kept = tuple(p for p in cls.policies if p.id != policy_id)
    if len(kept) == len(cls.policies):
        raise KeyError("policy %r not in class" % policy_id)
    if not kept:
        raise ValueError("cannot remove the last policy of a class")
    return PolicyClass(policies=kept, complexity=cls.complexity)


def policy_expected_reward(policy: Policy, context: Context,
                           evaluate: Callable[[int, Context], float],
                           n_actions: int | None = None) -> float:
    """Expected reward of `policy` at `context` under the reward function.

    Linked policies must be resolved to a real action by the caller before
    invocation (their value is another learner's realized proposal, which
    this function cannot know).
    """
    if policy.kind == "point":
        return float(evaluate(policy.action, context))
    if policy.kind == "linked":
        raise ConfigurationError(
            "cannot evaluate linked policy %r; resolve it first" % policy.id
        )
    row = policy.table[context.token]
    return float(sum(p * evaluate(a, context) for a, p in enumerate(row) if p > 0.0))


def rng_for(seed: int, tag: str) -> np.random.Generator:
    """Deterministic substream for (seed, tag).

    Every consumer of randomness draws from its own named substream, so
    adding diagnostics or re-ordering unrelated draws never perturbs an
    existing stream.  System entropy is never consulted.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(tag.encode())]))


def to_learner_view(r: float) -> float:
    """Map a protocol reward in [0, 1] to the learner-facing [-1, 1] scale."""
    return 2.0 * r - 1.0


def to_protocol_view(r: float) -> float:
    """Inverse of `to_learner_view`."""
    return (r + 1.0) / 2.0
