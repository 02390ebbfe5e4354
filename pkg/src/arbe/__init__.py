"""Bandit model selection by adversarial regret balancing.

A ladder of base bandit learners with known complexity claims is balanced by
a meta-algorithm that plays them in proportion to inverse squared complexity,
eliminates provably dominated classes, estimates the optimality gap of a
candidate policy through a shadow class, and exploits a certified gap while
watching for the environment to turn adversarial.
"""

__version__ = "0.1.0"

from .concentration import (
    BoundaryParams,
    bernstein_radius,
    cum_reward_radius,
    exploit_width,
    gap_width,
    hoeffding_radius,
    howard_radius,
)
from .core import (
    ActionSet,
    Context,
    Policy,
    PolicyClass,
    UNIT_CONTEXT,
    extend_policy_class,
    policy_expected_reward,
    remove_policy,
    resolve_linked_action,
    rng_for,
)
from .design import DesignResult, design_min_eigenvalue, optimal_design
from .envs import (
    make_adversarial_linear,
    make_contextual_finite,
    make_mean_drop,
    make_stochastic_linear,
    make_switching_bowb,
)
from .harness import (
    Constants,
    EnvSpec,
    ExperimentConfig,
    load_config,
    run_experiment,
    write_outputs,
)
from .learners import Exp4, FixedPolicyLearner, GeometricHedge, geo_schedule, make_extended_geo_hedge
from .meta import (
    Arbe,
    ArbeGap,
    BestOfBoth,
    GapExploit,
    MetaParams,
    Phase,
    SlotSpec,
    balancing_probabilities,
    fixed_slot_spec,
)
