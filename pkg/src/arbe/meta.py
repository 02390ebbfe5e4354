"""Meta-algorithms that balance a ladder of base learners.

The ladder holds learners 1..M in order of increasing claimed complexity,
typically nested model classes where only classes at or above some unknown
index are well specified.  Each round every active learner proposes an
action, one learner is sampled with probability inversely proportional to its
squared complexity, the sampled learner's proposal is played (after resolving
delegation links), and everyone is updated through their masked channel.

Three drivers are provided:

* `Arbe` runs the plain balancing loop: when the importance-weighted reward
  of a higher slot provably separates from a lower slot's, every class up to
  the lower slot is eliminated and the loop restarts above it.
* `ArbeGap` additionally maintains a shadow copy of the top class with a
  candidate policy removed, which turns the same machinery into an anytime
  estimator of the candidate's optimality gap.
* `GapExploit` commits to a candidate with a certified gap, exploring just
  enough to notice if the world stops being stochastic.

`BestOfBoth` chains them: gap estimation, then exploitation, falling back to
the plain loop if exploitation's running checks fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from .concentration import BoundaryParams, cum_reward_radius, exploit_width, gap_width
from .core import Context, LearnerProposal, resolve_linked_action, rng_for, to_learner_view
from .learners import BaseLearner, FixedPolicyLearner

__all__ = [
    "MetaParams",
    "SlotSpec",
    "fixed_slot_spec",
    "Event",
    "StepResult",
    "Phase",
    "balancing_probabilities",
    "elimination_test",
    "candidate_policy_test",
    "Arbe",
    "ArbeGap",
    "GapExploit",
    "BestOfBoth",
]


class Phase(Enum):
    GAP_ESTIMATION = "gap_estimation"
    EXPLOIT = "exploit"
    ADVERSARIAL_FALLBACK = "adversarial_fallback"


@dataclass(frozen=True)
class MetaParams:
    """Tunable constants of the balancing layer.

    conc_scale multiplies the per-slot deviation radii in the elimination
    test; restart_factor widens them to absorb window re-anchorings (set
    union_exact to divide delta by the squared restart ordinal instead).
    c_w and c_v scale the gap and exploitation interval widths; c_k0 and
    c_rho control the exploitation epoch length and exploration rate and
    must satisfy c_k0 >= 6 c_rho so the exploration probability stays
    below 1/2.
    """

    conc_scale: float = 1.0
    restart_factor: float = 3.0
    union_exact: bool = False
    c_w: float = 1.0
    c_v: float = 1.0
    c_k0: float = 6.0
    c_rho: float = 1.0

    def __post_init__(self):
        if self.conc_scale <= 0.0 or self.c_w <= 0.0 or self.c_v <= 0.0:
            raise ValueError("scale constants must be positive")
        if self.c_k0 < 6.0 * self.c_rho:
            raise ValueError("need c_k0 >= 6 * c_rho")


@dataclass(frozen=True)
class SlotSpec:
    """Recipe for one ladder slot.

    `complexity` is the claimed R of the base class.  `factory` builds a
    fresh learner: factory(link_targets, delta, rho, rng, exclude_shared)
    where link_targets lists the learner indices the extension must be able
    to delegate to, and exclude_shared optionally removes one shared action
    from the learner's class (used by the shadow slot and the exploitation
    inner learner).
    """

    complexity: float
    factory: Callable[..., BaseLearner]

    def __post_init__(self):
        if self.complexity < 1.0:
            raise ValueError("slot complexity must be >= 1")


def fixed_slot_spec(action: int, complexity: float = 1.0) -> SlotSpec:
    """A slot that always plays one shared action and never learns.

    The returned learner ignores link targets and exclusions: a constant
    player has no synthetic actions to delegate through, whatever its
    position in the ladder claims.
    """

    def make(link_targets, delta, rho, rng, exclude_shared=None):
        return FixedPolicyLearner(action=action, complexity=complexity, rho=rho)

    return SlotSpec(complexity=complexity, factory=make)


@dataclass(frozen=True)
class Event:
    t: int
    kind: str  # elimination | restart | gap_found | exploit_return | policy_switch
    info: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class StepResult:
    t: int
    action: int
    reward: float
    phase: Phase | None
    active_s: int
    candidate: int | None = None
    gap_estimate: float | None = None
    events: tuple[Event, ...] = ()


def balancing_probabilities(complexities: Sequence[float]) -> np.ndarray:
    """Sampling probabilities proportional to inverse squared complexity."""
    r = np.asarray(complexities, dtype=float)
    if r.size == 0:
        raise ValueError("need at least one complexity")
    if (r < 1.0).any():
        raise ValueError("complexities must be >= 1")
    inv = 1.0 / (r * r)
    return inv / inv.sum()


def elimination_test(indices: Sequence[int], crews: Sequence[float],
                     radii: Sequence[float], slacks: Sequence[float],
                     top_exempt: int | None = None) -> int | None:
    """Largest index whose slot is provably dominated, or None.

    A pair (i, j), i < j, is violated when crew_j exceeds crew_i plus both
    deviation radii plus slot i's regret slack.  All classes up to the
    largest violated i are then unfit; the caller restarts above it.  Pairs
    whose lower member is `top_exempt` are skipped (a shadow slot carries no
    ladder information against the class it mirrors).
    """
    worst = None
    k = len(indices)
    for a in range(k - 1):
        if top_exempt is not None and indices[a] >= top_exempt:
            break
        bound = crews[a] + radii[a] + slacks[a]
        for b in range(a + 1, k):
            if crews[b] > bound + radii[b]:
                worst = indices[a]
                break
    return worst


def candidate_policy_test(counts: Mapping[int, int], candidate: int,
                          t: int) -> int | None:
    """Action other than `candidate` played more than 3t/4 of all t rounds.

    Needs t >= 9; counts are global across window re-anchorings.  Returns
    the offending action (largest count on ties) or None.
    """
    if t < 9:
        return None
    threshold = 0.75 * t
    best = None
    best_count = -1
    for action, c in counts.items():
        if action != candidate and c > threshold and c > best_count:
            best, best_count = action, c
    return best


def _feed_learner(learner: BaseLearner, reward: float, observed: bool) -> None:
    if learner.reward_view == "pm1":
        learner.observe(to_learner_view(reward) if observed else 0.0, observed)
    else:
        learner.observe(reward if observed else 0.0, observed)


class _Ladder:
    """Shared mechanics: build slots, sample, update, compute radii."""

    def __init__(self, specs: Sequence[SlotSpec], delta: float, seed: int,
                 params: MetaParams, t_start: int, stream_prefix: str):
        if not specs:
            raise ValueError("need at least one slot")
        self.specs = list(specs)
        self.m = len(self.specs)
        self.delta = float(delta)
        self.seed = int(seed)
        self.params = params
        self.t = int(t_start)
        self.prefix = stream_prefix
        self.choice_rng = rng_for(seed, stream_prefix + ".choice")
        self.build_counter = 0
        self.restart_count = 0

    def _boundary(self) -> BoundaryParams:
        if self.params.union_exact:
            n = max(1, self.restart_count)
            return BoundaryParams(delta=self.delta / (n * n), restart_factor=1.0)
        return BoundaryParams(delta=self.delta,
                              restart_factor=self.params.restart_factor)

    def _fresh_learner(self, slot_index: int, spec: SlotSpec, targets, rho,
                       exclude=None) -> BaseLearner:
        self.build_counter += 1
        rng = rng_for(self.seed, "%s.slot%d.b%d"
                      % (self.prefix, slot_index, self.build_counter))
        return spec.factory(targets, self.delta, rho, rng, exclude_shared=exclude)

    def _sample_slot(self, rhos: np.ndarray, indices: Sequence[int]) -> int:
        u = self.choice_rng.random()
        acc = 0.0
        for pos in range(len(indices) - 1):
            acc += rhos[pos]
            if u < acc:
                return indices[pos]
        return indices[-1]


class Arbe(_Ladder):
    """Plain regret-balancing over an ordered ladder of learners.

    Slots below the top are extended with one delegation link per higher
    slot, adding one unit of claimed complexity each.  Eliminations restart
    the ladder above the dominated slot; the window anchor and all learner
    state reset, while the global round counter keeps running.
    """

    def __init__(self, specs: Sequence[SlotSpec], delta: float, seed: int,
                 params: MetaParams = MetaParams(), s: int = 1,
                 t_start: int = 0, stream_prefix: str = "arbe"):
        super().__init__(specs, delta, seed, params, t_start, stream_prefix)
        if not 1 <= s <= self.m:
            raise ValueError("s must lie in [1, %d]" % self.m)
        self._rebuild(s)

    def _rebuild(self, s: int) -> None:
        self.s = s
        self.t0 = self.t
        self.indices = list(range(s, self.m + 1))
        ext = [self.specs[i - 1].complexity + (self.m - i) for i in self.indices]
        self.ext_complexity = ext
        self.rhos = balancing_probabilities(ext)
        self.learners = []
        for pos, i in enumerate(self.indices):
            targets = list(range(i + 1, self.m + 1))
            self.learners.append(self._fresh_learner(
                i, self.specs[i - 1], targets, float(self.rhos[pos])))
        self.crews = np.zeros(len(self.indices))

    def step(self, context: Context, realize: Callable[[int], float]) -> StepResult:
        self.t += 1
        t = self.t
        proposals = {}
        for pos, i in enumerate(self.indices):
            k = self.learners[pos].propose(context)
            link = self.learners[pos].link_target(k)
            if link is None:
                proposals[i] = LearnerProposal(action=self.learners[pos].shared_action(k))
            else:
                proposals[i] = LearnerProposal(linked_to=link)
        chosen = self._sample_slot(self.rhos, self.indices)
        action, _chain = resolve_linked_action(proposals, chosen)
        reward = realize(action)
        for pos, i in enumerate(self.indices):
            _feed_learner(self.learners[pos], reward, i == chosen)
        cpos = self.indices.index(chosen)
        self.crews[cpos] += reward / self.rhos[cpos]

        events = []
        span = t - self.t0
        if span >= 2 and len(self.indices) > 1:
            bp = self._boundary()
            radii = [self.params.conc_scale
                     * cum_reward_radius(self.t0, t, float(self.rhos[p]), bp)
                     for p in range(len(self.indices))]
            log_t = math.log(max(t, 2) / self.delta)
            slacks = [self.ext_complexity[p]
                      * math.sqrt(span / float(self.rhos[p]) * log_t)
                      for p in range(len(self.indices))]
            bad = elimination_test(self.indices, self.crews, radii, slacks)
            if bad is not None:
                self.restart_count += 1
                events.append(Event(t, "elimination", {"i": bad}))
                events.append(Event(t, "restart",
                                    {"reason": "elimination",
                                     "n": self.restart_count}))
                self._rebuild(bad + 1)
        return StepResult(t=t, action=action, reward=reward,
                          phase=Phase.GAP_ESTIMATION, active_s=self.s,
                          events=tuple(events))


class ArbeGap(_Ladder):
    """Balancing ladder with a shadow top slot for gap estimation.

    The shadow (index M + 1) mirrors the top class with the candidate
    policy's action removed and inherits the top slot's extended complexity.
    The spread between the top and shadow importance-weighted rewards,
    deflated by `gap_width`, lower-bounds the candidate's optimality gap.
    Re-anchorings (eliminations and candidate switches) increment n, which
    enters the width's union bound; play counts for the candidate test are
    global and survive re-anchorings.
    """

    def __init__(self, specs: Sequence[SlotSpec], delta: float, seed: int,
                 params: MetaParams = MetaParams(), s: int = 1,
                 t_start: int = 0, candidate: int = 0,
                 stream_prefix: str = "arbegap"):
        super().__init__(specs, delta, seed, params, t_start, stream_prefix)
        if not 1 <= s <= self.m:
            raise ValueError("s must lie in [1, %d]" % self.m)
        self.candidate = int(candidate)
        self.n_anchor = 1
        self.counts: dict[int, int] = {}
        self.gap_ready: float | None = None
        self._rebuild(s)

    def _rebuild(self, s: int) -> None:
        self.s = s
        self.t0 = self.t
        top = self.m + 1
        self.indices = list(range(s, self.m + 1)) + [top]
        ext = [self.specs[i - 1].complexity + (top - i)
               for i in range(s, self.m + 1)]
        ext.append(ext[-1])  # shadow inherits the top slot's claimed complexity
        self.ext_complexity = ext
        self.rhos = balancing_probabilities(ext)
        self.learners = []
        for pos, i in enumerate(self.indices[:-1]):
            targets = list(range(i + 1, top + 1))
            self.learners.append(self._fresh_learner(
                i, self.specs[i - 1], targets, float(self.rhos[pos])))
        self.learners.append(self._fresh_learner(
            top, self.specs[self.m - 1], [], float(self.rhos[-1]),
            exclude=self.candidate))
        self.crews = np.zeros(len(self.indices))

    def _reanchor(self, s: int, candidate: int | None = None) -> None:
        self.n_anchor += 1
        if candidate is not None:
            self.candidate = candidate
        self._rebuild(s)

    def step(self, context: Context, realize: Callable[[int], float]) -> StepResult:
        self.t += 1
        t = self.t
        proposals = {}
        for pos, i in enumerate(self.indices):
            k = self.learners[pos].propose(context)
            link = self.learners[pos].link_target(k)
            if link is None:
                proposals[i] = LearnerProposal(action=self.learners[pos].shared_action(k))
            else:
                proposals[i] = LearnerProposal(linked_to=link)
        chosen = self._sample_slot(self.rhos, self.indices)
        action, _chain = resolve_linked_action(proposals, chosen)
        reward = realize(action)
        for pos, i in enumerate(self.indices):
            _feed_learner(self.learners[pos], reward, i == chosen)
        cpos = self.indices.index(chosen)
        self.crews[cpos] += reward / self.rhos[cpos]
        self.counts[action] = self.counts.get(action, 0) + 1

        events = []
        gap_hat = None
        span = t - self.t0
        if span >= 2:
            bp = self._boundary()
            radii = [self.params.conc_scale
                     * cum_reward_radius(self.t0, t, float(self.rhos[p]), bp)
                     for p in range(len(self.indices))]
            log_t = math.log(max(t, 2) / self.delta)
            slacks = [self.ext_complexity[p]
                      * math.sqrt(span / float(self.rhos[p]) * log_t)
                      for p in range(len(self.indices))]
            bad = elimination_test(self.indices, self.crews, radii, slacks,
                                   top_exempt=self.m)
            if bad is not None:
                self.restart_count += 1
                events.append(Event(t, "elimination", {"i": bad}))
                events.append(Event(t, "restart",
                                    {"reason": "elimination",
                                     "n": self.n_anchor + 1}))
                self._reanchor(bad + 1)
                return StepResult(t=t, action=action, reward=reward,
                                  phase=Phase.GAP_ESTIMATION, active_s=self.s,
                                  candidate=self.candidate,
                                  events=tuple(events))

            r_top = self.ext_complexity[-2]
            rho_top = float(self.rhos[-2])
            width = gap_width(self.t0, t, rho_top, r_top, self.n_anchor,
                              BoundaryParams(delta=self.delta),
                              c_w=self.params.c_w)
            gap_hat = (self.crews[-2] - self.crews[-1]) / span - width
            if 2.0 * width <= gap_hat <= r_top * r_top:
                self.gap_ready = float(gap_hat)
                events.append(Event(t, "gap_found", {"gap": float(gap_hat)}))
                return StepResult(t=t, action=action, reward=reward,
                                  phase=Phase.GAP_ESTIMATION, active_s=self.s,
                                  candidate=self.candidate,
                                  gap_estimate=float(gap_hat),
                                  events=tuple(events))

        switch = candidate_policy_test(self.counts, self.candidate, t)
        if switch is not None:
            self.restart_count += 1
            events.append(Event(t, "policy_switch", {"policy": switch}))
            events.append(Event(t, "restart",
                                {"reason": "candidate", "n": self.n_anchor + 1}))
            self._reanchor(self.s, candidate=switch)
        return StepResult(t=t, action=action, reward=reward,
                          phase=Phase.GAP_ESTIMATION, active_s=self.s,
                          candidate=self.candidate,
                          gap_estimate=None if gap_hat is None else float(gap_hat),
                          events=tuple(events))


class GapExploit:
    """Commit to a candidate policy whose gap is certified, with tripwires.

    Plays the candidate except for a vanishing fraction of exploration
    rounds given to an inner learner over the class without the candidate.
    Epochs double in length; each epoch restarts the inner learner with its
    own failure budget and exploration rate.  Two running checks compare the
    candidate's mean advantage to the certified gap; if the advantage leaves
    [gap, 4 gap] by more than the interval width, the world is declared
    non-stochastic and control returns to the caller.
    """

    def __init__(self, spec: SlotSpec, r_value: float, candidate: int,
                 gap_hat: float, delta: float, seed: int,
                 params: MetaParams = MetaParams(), t_start: int = 0,
                 stream_prefix: str = "exploit"):
        if gap_hat <= 0.0:
            raise ValueError("gap estimate must be positive")
        self.spec = spec
        self.r = float(r_value)
        self.candidate = int(candidate)
        self.gap = float(gap_hat)
        self.delta = float(delta)
        self.seed = int(seed)
        self.params = params
        self.t = int(t_start)
        self.prefix = stream_prefix
        self.mask_rng = rng_for(seed, stream_prefix + ".mask")
        self.epoch = -1
        self.verdict: str | None = None
        c0 = params.c_k0
        raw = (c0 * self.r * self.r / (self.gap * self.gap)) \
            * math.log(2.0 * c0 * self.r / (self.gap * self.delta))
        self.k0 = max(2, int(math.ceil(raw)))
        self._start_epoch(0, self.t)

    def _start_epoch(self, e: int, t_e: int) -> None:
        self.epoch = e
        self.k_e = self.k0 * (2 ** e)
        self.t_e = t_e
        self.delta_e = self.delta / ((e + 1) * (e + 1))
        raw = (self.params.c_rho * self.r * self.r
               * math.log(self.k_e / self.delta_e)
               / (self.k_e * self.gap * self.gap))
        self.rho_e = min(max(raw, 1e-12), 0.5)
        rng = rng_for(self.seed, "%s.inner.e%d" % (self.prefix, e))
        self.inner = self.spec.factory([], self.delta_e, self.rho_e, rng,
                                       exclude_shared=self.candidate)
        self.crew_candidate = 0.0
        self.crew_inner = 0.0

    def step(self, context: Context, realize: Callable[[int], float]) -> StepResult:
        self.t += 1
        t = self.t
        if t > self.t_e + self.k_e:
            self._start_epoch(self.epoch + 1, t - 1)
        inner_k = self.inner.propose(context)
        explore = self.mask_rng.random() < self.rho_e
        if explore:
            link = self.inner.link_target(inner_k)
            if link is not None:
                raise RuntimeError("exploitation inner learner proposed a link")
            action = self.inner.shared_action(inner_k)
        else:
            action = self.candidate
        reward = realize(action)
        _feed_learner(self.inner, reward, explore)
        if explore:
            self.crew_inner += reward / self.rho_e
        else:
            self.crew_candidate += reward / (1.0 - self.rho_e)

        events = []
        span = t - self.t_e
        if span >= 2 and self.verdict is None:
            v = exploit_width(self.t_e, t, self.rho_e, self.r, self.delta_e,
                              c_v=self.params.c_v)
            diff = (self.crew_candidate - self.crew_inner) / span
            if diff < self.gap - v or diff > 4.0 * self.gap + v:
                self.verdict = "adversarial"
                events.append(Event(t, "exploit_return",
                                    {"diff": float(diff), "width": float(v)}))
        return StepResult(t=t, action=action, reward=reward,
                          phase=Phase.EXPLOIT, active_s=0,
                          candidate=self.candidate, gap_estimate=self.gap,
                          events=tuple(events))


class BestOfBoth:
    """Gap estimation, then exploitation, with a plain-balancing fallback.

    Runs `ArbeGap` until it certifies a candidate's gap, hands control to
    `GapExploit`, and if the exploitation tripwires fire, finishes with a
    fresh full-ladder `Arbe` from the verdict round onward.
    """

    def __init__(self, specs: Sequence[SlotSpec], delta: float, seed: int,
                 params: MetaParams = MetaParams(), candidate: int = 0):
        self.specs = list(specs)
        self.delta = float(delta)
        self.seed = int(seed)
        self.params = params
        self.phase = Phase.GAP_ESTIMATION
        self.gap_meta = ArbeGap(specs, delta, seed, params, candidate=candidate)
        self.exploit: GapExploit | None = None
        self.fallback: Arbe | None = None
        self.t_gap: int | None = None
        self.gap_estimate: float | None = None

    def step(self, context: Context, realize: Callable[[int], float]) -> StepResult:
        if self.phase is Phase.GAP_ESTIMATION:
            res = self.gap_meta.step(context, realize)
            if self.gap_meta.gap_ready is not None:
                self.t_gap = res.t
                self.gap_estimate = self.gap_meta.gap_ready
                top_spec = self.specs[-1]
                self.exploit = GapExploit(
                    top_spec, r_value=top_spec.complexity,
                    candidate=self.gap_meta.candidate,
                    gap_hat=self.gap_estimate, delta=self.delta,
                    seed=self.seed, params=self.params, t_start=res.t,
                    stream_prefix="exploit")
                self.phase = Phase.EXPLOIT
            return res
        if self.phase is Phase.EXPLOIT:
            res = self.exploit.step(context, realize)
            if self.exploit.verdict is not None:
                self.fallback = Arbe(self.specs, self.delta, self.seed,
                                     self.params, t_start=res.t,
                                     stream_prefix="fallback")
                self.phase = Phase.ADVERSARIAL_FALLBACK
            return res
        res = self.fallback.step(context, realize)
        return StepResult(t=res.t, action=res.action, reward=res.reward,
                          phase=Phase.ADVERSARIAL_FALLBACK,
                          active_s=res.active_s, events=res.events)
