"""Shared test helpers.

The scripted learner plays a fixed round-indexed schedule of shared actions,
which makes meta-layer bookkeeping (play counts, candidate switches, crews)
hand-checkable without learning dynamics in the way.  The recording factory
wraps a slot factory and logs every construction call, so tests can assert
what the balancing layer asked for (link targets, rho, exclusions).
"""

import numpy as np

from arbe.learners import BaseLearner
from arbe.meta import SlotSpec


class ScriptedLearner(BaseLearner):
    """Plays `schedule(t)` at its t-th proposal, observes nothing."""

    reward_view = "unit"

    def __init__(self, schedule, complexity: float = 1.0, rho: float = 1.0):
        self.schedule = schedule
        self.rho = float(rho)
        self._complexity = float(complexity)
        self.calls = 0

    def propose(self, context) -> int:
        self.calls += 1
        return self.schedule(self.calls)

    def observe(self, reward: float, observed: bool) -> None:
        pass

    def restart(self, delta: float) -> None:
        self.calls = 0

    def complexity(self) -> float:
        return self._complexity


def scripted_slot_spec(schedule, complexity: float = 1.0) -> SlotSpec:
    def make(link_targets, delta, rho, rng, exclude_shared=None):
        return ScriptedLearner(schedule, complexity=complexity, rho=rho)

    return SlotSpec(complexity=complexity, factory=make)


class RecordingSpec:
    """SlotSpec wrapper that records every factory invocation."""

    def __init__(self, inner: SlotSpec):
        self.calls = []
        self.spec = SlotSpec(complexity=inner.complexity,
                             factory=self._make(inner.factory))

    def _make(self, factory):
        def wrapped(link_targets, delta, rho, rng, exclude_shared=None):
            self.calls.append({"targets": list(link_targets), "delta": delta,
                               "rho": rho, "exclude": exclude_shared})
            return factory(link_targets, delta, rho, rng,
                           exclude_shared=exclude_shared)

        return wrapped


def constant_rewards(values):
    """A realize() callable serving a fixed per-action reward vector."""
    vec = np.asarray(values, dtype=float)

    def realize(action: int) -> float:
        return float(vec[action])

    return realize
