"""Environment construction and session reproducibility."""

import numpy as np
import pytest

from arbe.core import UNIT_CONTEXT
from arbe.envs import (
    AdversarialLinearEnv,
    ContextualFiniteEnv,
    EnvBuildError,
    ShiftedMeansEnv,
    StochasticLinearEnv,
    SwitchingEnv,
    make_adversarial_linear,
    make_contextual_finite,
    make_mean_drop,
    make_stochastic_linear,
    make_switching_bowb,
)


@pytest.fixture(scope="module")
def nested_env():
    return make_stochastic_linear((2, 4), 2, 0.1, 12, seed=1)


# ------------------------------------------------------------- construction

def test_stochastic_gap_is_exact(nested_env):
    m = np.sort(nested_env.means)
    assert m[-1] - m[-2] == pytest.approx(0.1, abs=1e-9)
    assert nested_env.gap == 0.1
    assert nested_env.best_action == int(np.argmax(nested_env.means))


def test_stochastic_geometry(nested_env):
    pts = nested_env.points
    assert pts.shape == (12, 4)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)
    for d in nested_env.dims:
        assert np.linalg.matrix_rank(pts[:, :d]) == d
    assert np.linalg.norm(nested_env.omega) <= 1.0
    # the reward vector is supported on the well-specified prefix
    assert np.allclose(nested_env.omega[nested_env.dims[1]:], 0.0)


def test_stochastic_lower_class_misspecified(nested_env):
    pts, scores = nested_env.points, nested_env.points @ nested_env.omega
    d = nested_env.dims[0]
    theta, *_ = np.linalg.lstsq(pts[:, :d], scores, rcond=None)
    assert np.max(np.abs(pts[:, :d] @ theta - scores)) >= 1e-3


def test_stochastic_means_leave_noise_headroom(nested_env):
    sd = nested_env.noise_sd
    assert nested_env.means.min() >= 4.0 * sd
    assert nested_env.means.max() <= 1.0 - 4.0 * sd


def test_stochastic_determinism(nested_env):
    again = make_stochastic_linear((2, 4), 2, 0.1, 12, seed=1)
    assert np.array_equal(again.points, nested_env.points)
    assert np.array_equal(again.omega, nested_env.omega)
    other = make_stochastic_linear((2, 4), 2, 0.1, 12, seed=2)
    assert not np.array_equal(other.points, nested_env.points)


def test_stochastic_pinned_instance():
    # the instance the experiment configs rely on
    env = make_stochastic_linear((2,), 1, 0.2, 6, seed=4)
    assert env.best_action == 3
    assert env.means[3] == pytest.approx(0.778, abs=5e-3)
    m = np.sort(env.means)
    assert m[-1] - m[-2] == pytest.approx(0.2, abs=1e-9)


def test_stochastic_validation():
    with pytest.raises(ValueError, match="increasing"):
        make_stochastic_linear((4, 2), 1, 0.1, 8)
    with pytest.raises(ValueError, match="i_star"):
        make_stochastic_linear((2, 4), 3, 0.1, 8)
    with pytest.raises(ValueError, match="target_gap"):
        make_stochastic_linear((2,), 1, 0.7, 8)
    with pytest.raises(ValueError, match="actions"):
        make_stochastic_linear((2, 4), 1, 0.1, 3)


def test_stochastic_flags(nested_env):
    assert nested_env.kind == "stochastic_linear"
    assert nested_env.supports_pseudo_regret is True
    assert nested_env.stationary_means is True


# ----------------------------------------------------------------- sessions

def test_session_rewards_deterministic_and_bounded(nested_env):
    s1 = nested_env.session(7)
    s2 = nested_env.session(7)
    s3 = nested_env.session(8)
    r1 = np.stack([s1.rewards(t) for t in range(1, 300)])
    r2 = np.stack([s2.rewards(t) for t in range(1, 300)])
    r3 = np.stack([s3.rewards(t) for t in range(1, 300)])
    assert np.array_equal(r1, r2)
    assert not np.array_equal(r1, r3)
    assert r1.min() >= 0.0 and r1.max() <= 1.0
    assert s1.context(5) is UNIT_CONTEXT


def test_session_access_order_independent(nested_env):
    seq = nested_env.session(3)
    rnd = nested_env.session(3)
    ts = list(range(1, 40)) + [5000, 4096, 4097, 1, 9000, 2]
    want = {t: seq.rewards(t).copy() for t in sorted(set(ts))}
    for t in ts:
        assert np.array_equal(rnd.rewards(t), want[t])


def test_session_noiseless_returns_means(nested_env):
    quiet = StochasticLinearEnv(nested_env.points, nested_env.omega,
                                nested_env.dims, 2, 0.1, 0.0)
    s = quiet.session(1)
    assert np.array_equal(s.rewards(123), quiet.means)
    assert s.best_mean(1) == quiet.means.max()


def test_session_mean_is_unbiased(nested_env):
    s = nested_env.session(11)
    acc = np.zeros(nested_env.action_count)
    n = 3000
    for t in range(1, n + 1):
        acc += s.rewards(t)
    tol = 4.0 * nested_env.noise_sd / np.sqrt(n) + 1e-3
    assert np.max(np.abs(acc / n - nested_env.means)) < tol
    assert s.best_mean(1) == s.best_mean(999)  # cached stationary optimum


# -------------------------------------------------------------- adversarial

def test_adversarial_oblivious_blocks():
    env = make_adversarial_linear((2, 4), 8, "oblivious-sequence",
                                  seed=3, period=16)
    m = np.stack([env.means_at(t) for t in range(1, 49)])
    assert np.array_equal(m[0], m[15])
    assert not np.array_equal(m[15], m[16])
    assert np.array_equal(m[16], m[31])
    assert m.min() >= 0.0 and m.max() <= 1.0


def test_adversarial_oblivious_period_one_changes_every_round():
    env = make_adversarial_linear((2,), 6, "oblivious-sequence",
                                  seed=3, period=1)
    assert not np.array_equal(env.means_at(1), env.means_at(2))
    assert not np.array_equal(env.means_at(2), env.means_at(3))


def test_adversarial_biased_sequence_has_persistent_champion():
    env = make_adversarial_linear((4,), 16, "biased-sequence",
                                  seed=5, period=1)
    blocks = np.stack([env.means_at(t) for t in range(1, 401)])
    assert not np.array_equal(blocks[0], blocks[1])
    assert blocks.min() >= 0.05 and blocks.max() <= 0.95  # norm budget 0.9
    # averaging washes out the fluctuation half and leaves the bias half
    avg = blocks.mean(axis=0)
    spread = avg.max() - avg.min()
    assert spread > 0.15  # a clear persistent favourite exists
    bias_winner = np.argmax(avg)
    wins = np.mean(np.argmax(blocks, axis=1) == bias_winner)
    chance = 1.0 / env.action_count
    assert 2.0 * chance < wins < 0.95  # favoured but not a giveaway


def test_adversarial_phase_switching():
    env = make_adversarial_linear((2,), 5, "phase-switching",
                                  seed=1, t_switch=100)
    assert np.array_equal(env.means_at(1), env.means_at(100))
    assert not np.array_equal(env.means_at(100), env.means_at(101))
    assert np.array_equal(env.means_at(101), env.means_at(10 ** 6))
    with pytest.raises(ValueError, match="t_switch"):
        make_adversarial_linear((2,), 5, "phase-switching", seed=1)


def test_adversarial_sign_flipping():
    env = make_adversarial_linear((2,), 5, "sign-flipping", seed=1, period=32)
    for t in (1, 17, 32):
        assert np.allclose(env.means_at(t) + env.means_at(t + 32), 1.0)
    assert np.array_equal(env.means_at(1), env.means_at(65))


def test_adversarial_validation_and_flags():
    with pytest.raises(ValueError, match="period"):
        make_adversarial_linear((2,), 5, "oblivious-sequence", period=0)
    with pytest.raises(ValueError, match="script"):
        make_adversarial_linear((2,), 5, "slow-drift")
    env = make_adversarial_linear((2,), 5, "sign-flipping", period=8)
    assert env.supports_pseudo_regret is False
    assert env.stationary_means is False
    assert env.noise_sd == 0.0
    s = env.session(9)
    assert np.array_equal(s.rewards(3), env.means_at(3))  # scripted, no noise


# ------------------------------------------------- shifted means, switching

def test_shifted_means_validation(nested_env):
    with pytest.raises(ValueError, match="0, 1"):
        ShiftedMeansEnv(nested_env, np.full(nested_env.action_count, 0.9))


def test_make_mean_drop_targets_best_only(nested_env):
    dropped = make_mean_drop(nested_env, 0.3)
    diff = nested_env.means - dropped.means
    assert diff[nested_env.best_action] == pytest.approx(0.3)
    mask = np.ones(nested_env.action_count, bool)
    mask[nested_env.best_action] = False
    assert np.allclose(diff[mask], 0.0)
    assert dropped.supports_pseudo_regret is True


def test_switching_env_routes_and_matches_prefix(nested_env):
    post = make_mean_drop(nested_env, 0.3)
    env = make_switching_bowb(nested_env, 50, post)
    assert isinstance(env, SwitchingEnv)
    assert np.array_equal(env.means_at(50), nested_env.means)
    assert np.array_equal(env.means_at(51), post.means)
    s = env.session(7)
    plain = nested_env.session(7)
    for t in (1, 25, 50):
        assert np.array_equal(s.rewards(t), plain.rewards(t))
    assert not np.array_equal(s.rewards(51), plain.rewards(51))
    assert s.best_mean(10) == plain.best_mean(10)
    assert s.best_mean(51) == post.means.max()


def test_switching_env_rejects_mismatched_actions(nested_env):
    other = make_stochastic_linear((2, 4), 2, 0.1, 10, seed=1)
    with pytest.raises(ValueError, match="action set"):
        SwitchingEnv(nested_env, 10, other)


# --------------------------------------------------------------- contextual

def test_contextual_policy_values_brute_force():
    env = make_contextual_finite(5, 3, 4, seed=2)
    for p in range(env.policy_count):
        val = np.mean([env.mean_table[x, env.policy_actions[p, x]]
                       for x in range(env.context_count)])
        assert env.policy_values[p] == pytest.approx(val)
    assert env.best_policy == 0  # the greedy policy is planted at index 0
    assert env.gap >= 0.0


def test_contextual_learner_tables_one_hot():
    env = make_contextual_finite(4, 3, 2, seed=1)
    tables = env.learner_tables()
    assert tables.shape == (4, 2, 3)
    assert np.array_equal(tables.sum(axis=2), np.ones((4, 2)))
    for p in range(4):
        for x in range(2):
            assert tables[p, x, env.policy_actions[p, x]] == 1.0


def test_contextual_session_contract():
    env = make_contextual_finite(4, 3, 4, seed=3)
    s1, s2 = env.session(5), env.session(5)
    for t in (1, 2, 77, 5000):
        assert s1.context(t).token == s2.context(t).token
        assert np.array_equal(s1.rewards(t), s2.rewards(t))
        x = s1.context(t).token
        assert 0 <= x < 4
        assert np.array_equal(s1.means(t), env.mean_table[x])
        best_a = env.policy_actions[env.best_policy, x]
        assert s1.best_mean(t) == env.mean_table[x, best_a]
        assert set(np.unique(s1.rewards(t))) <= {0.0, 1.0}


def test_contextual_rewards_are_bernoulli_with_table_rates():
    env = make_contextual_finite(3, 2, 2, seed=4)
    s = env.session(1)
    n = 6000
    hits = np.zeros(2)
    per_ctx = {x: [0.0, 0] for x in range(2)}
    for t in range(1, n + 1):
        r = s.rewards(t)
        x = s.context(t).token
        per_ctx[x][0] += r[0]
        per_ctx[x][1] += 1
        hits += r
    for x in range(2):
        total, cnt = per_ctx[x]
        assert total / cnt == pytest.approx(env.mean_table[x, 0],
                                            abs=4.0 / np.sqrt(cnt))


def test_contextual_validation():
    with pytest.raises(ValueError, match="actions"):
        make_contextual_finite(3, 1, 2)
    with pytest.raises(ValueError, match="polic"):
        make_contextual_finite(1, 3, 2)
