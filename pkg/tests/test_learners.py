import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle_ftpl.core import DomainError, accumulate_statistic, cumulative_loss, general_term, linear_term, one_hot
from oracle_ftpl.environments import make_experts_task
from oracle_ftpl.learners import (
    FtplState,
    SemiBanditConfig,
    SemiBanditFTPL,
    clairvoyant_predictor,
    default_L,
    ftpl_choose,
    ftpl_update,
    optimistic_choose,
    previous_loss_predictor,
    semibandit_round,
    zero_predictor,
)
from oracle_ftpl.oracles import EnumerationOracle, PolicyClass
from oracle_ftpl.perturbation import SeedStream


def experts(K=2):
    return EnumerationOracle(PolicyClass([one_hot(j, K)[None, :] for j in range(K)]))


def test_singleton_always_chosen():
    oracle = EnumerationOracle(PolicyClass([one_hot(0, 2)[None, :]]))
    state = FtplState(oracle, [0], 1.0)
    root = SeedStream(0)
    for t in range(20):
        assert ftpl_choose(state, 0, root.child(t)).index == 0
        ftpl_update(state, linear_term(0, [1.0, 0.0]))


def test_large_gap_history_dominates():
    state = FtplState(experts(), [0], 1.0)
    state.update(linear_term(0, [0.0, 100.0]))
    rng = np.random.default_rng(1)
    picks = [state.leader(state.draw(rng)).index for _ in range(10_000)]
    assert np.mean(np.array(picks) == 0) >= 0.999


def test_symmetric_empty_history_is_fair():
    state = FtplState(experts(), [0], 1.0)
    rng = np.random.default_rng(2)
    picks = np.array([state.leader(state.draw(rng)).index for _ in range(10_000)])
    assert abs(np.mean(picks == 0) - 0.5) <= 0.02


def test_one_oracle_call_per_round():
    state = FtplState(experts(3), [0], 1.0)
    root = SeedStream(3)
    for t in range(1, 11):
        state.choose(0, root.child(t))
        state.update(linear_term(0, [0.1, 0.2, 0.3]))
        assert state.oracle_calls == t
        assert len(state.history) == t and state.t == t + 1


def test_update_context_mismatch():
    state = FtplState(EnumerationOracle(PolicyClass([np.eye(2, dtype=np.int8)])), [0, 1], 1.0)
    state.choose(0, SeedStream(0))
    with pytest.raises(DomainError):
        state.update(linear_term(1, [0.0, 1.0]))


def test_unregistered_noise_context():
    with pytest.raises(DomainError):
        FtplState(experts(), [1], 1.0)


def test_history_and_statistic_bookkeeping():
    pc = make_experts_task(3, 3, 10, seed=0).pc
    state = FtplState(EnumerationOracle(pc), range(3), 0.5)
    seq = [linear_term(t % 3, [t / 8, 0.25, 1 - t / 8]) for t in range(8)]
    for y in seq:
        state.update(y)
    assert state.history == seq
    np.testing.assert_array_equal(state.phi, accumulate_statistic(seq, 3, 3))
    for pol in pc.policies:
        assert cumulative_loss(pol, state.history) == cumulative_loss(pol, seq[:4]) + cumulative_loss(pol, seq[4:])


def test_general_history_switches_to_sequence_path():
    pc = PolicyClass([one_hot(j, 2)[None, :] for j in range(2)])
    state = FtplState(EnumerationOracle(pc), [0], 1e6)
    state.update(general_term(0, {(1, 0): 5.0, (0, 1): 0.0}))
    assert not state.all_linear
    assert state.choose(0, SeedStream(0)).index == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.lists(st.integers(0, 8), min_size=1, max_size=6))
def test_statistic_and_sequence_paths_agree(seed, raw):
    pc = make_experts_task(2, 3, 6, seed=1).pc
    seq = [linear_term(i % 2, [v / 8, (8 - v) / 8, 0.5]) for i, v in enumerate(raw)]
    fast = FtplState(EnumerationOracle(pc), range(2), 1.0)
    for y in seq:
        fast.update(y)
    fake = fast.draw(np.random.default_rng(seed))
    slow = EnumerationOracle(pc).best_policy(fake.terms() + seq)
    assert fast.leader(fake).index == slow.index


def test_zero_predictor_matches_plain_choice():
    pc = make_experts_task(3, 4, 20, seed=2).pc
    a = FtplState(EnumerationOracle(pc), range(3), 0.7)
    b = FtplState(EnumerationOracle(pc), range(3), 0.7)
    root = SeedStream(9)
    rng = np.random.default_rng(0)
    for t in range(1, 30):
        x = t % 3
        assert ftpl_choose(a, x, root.child(t)).index == optimistic_choose(b, x, zero_predictor(4), root.child(t)).index
        y = linear_term(x, rng.random(4))
        a.update(y)
        b.update(y)


def test_perfect_predictor_picks_round_optimum():
    state = FtplState(experts(), [0], 4.0)
    f = linear_term(0, [0.0, 1.0])
    predictor = clairvoyant_predictor([f])
    root = SeedStream(4)
    picks = np.array([optimistic_choose(state, 0, predictor, root.child(i)).index for i in range(10_000)])
    assert np.mean(picks == 0) >= 0.95


def test_adversarial_predictor_still_valid():
    state = FtplState(experts(), [0], 1.0)
    f = linear_term(0, [0.0, 1.0])
    neg = clairvoyant_predictor([linear_term(0, -f.linear)])
    pol = optimistic_choose(state, 0, neg, SeedStream(0))
    assert pol.index in (0, 1)


def test_previous_loss_predictor():
    predict = previous_loss_predictor(2)
    assert predict(1, (), 0).linear.tolist() == [0.0, 0.0]
    out = predict(2, (linear_term(1, [0.25, 0.75]),), 0)
    assert out.context == 0 and out.linear.tolist() == [0.25, 0.75]


def test_predictor_context_must_match():
    state = FtplState(EnumerationOracle(PolicyClass([np.eye(2, dtype=np.int8)])), [0, 1], 1.0)
    wrong = clairvoyant_predictor([linear_term(1, [0.0, 1.0])])
    with pytest.raises(DomainError):
        optimistic_choose(state, 0, wrong, SeedStream(0))


# --------------------------------------------------------------------------
# semi-bandit


class OnlyPlayed:
    """Loss vector that fails the test if an unplayed coordinate is read."""

    def __init__(self, values, allowed):
        self.values, self.allowed = values, set(allowed)

    def __getitem__(self, j):
        assert j in self.allowed, f"read unobserved coordinate {j}"
        return self.values[j]


def test_singleton_resampling_is_immediate():
    oracle = EnumerationOracle(PolicyClass([np.array([[1, 0, 1]], dtype=np.int8)]))
    learner = SemiBanditFTPL(oracle, [0], SemiBanditConfig(1.0, 5))
    res = semibandit_round(learner, 0, [0.5, 0.7, 0.25], SeedStream(0))
    assert res.resample_counts == {0: 1, 2: 1}
    assert res.proxy.linear.tolist() == [0.5, 0.0, 0.25]
    assert res.oracle_calls == 3


def test_semibandit_reads_only_played_coordinates():
    pc = make_experts_task(2, 4, 8, seed=3).pc
    learner = SemiBanditFTPL(EnumerationOracle(pc), range(2), SemiBanditConfig(1.0, 4))
    root = SeedStream(5)
    values = [0.1, 0.2, 0.3, 0.4]
    for t in range(1, 40):
        x = t % 2
        probe_state = FtplState(EnumerationOracle(pc), range(2), 1.0)
        probe_state.phi[:] = learner.state.phi
        played = probe_state.choose(x, root.child(t)).action(x)
        res = learner.round(x, OnlyPlayed(values, np.flatnonzero(played).tolist()), root.child(t))
        np.testing.assert_array_equal(res.played, played)
        assert res.oracle_calls <= pc.m * 4 + 1


def test_expected_resample_count():
    oracle = experts()
    root = SeedStream(6)
    counts = []
    for r in range(10_000):
        learner = SemiBanditFTPL(oracle, [0], SemiBanditConfig(1.0, 2))
        counts.extend(learner.round(0, [1.0, 1.0], root.child(r)).resample_counts.values())
    assert abs(np.mean(counts) - 1.5) <= 0.03


@pytest.mark.slow
def test_proxy_bias_example():
    oracle = experts()
    root = SeedStream(7)
    proxies = np.array([
        SemiBanditFTPL(oracle, [0], SemiBanditConfig(1.0, 2)).round(0, [1.0, 1.0], root.child(r)).proxy.linear
        for r in range(100_000)
    ])
    assert abs(proxies.mean(axis=0) - 0.75).max() <= 0.01


def test_negative_loss_rejected():
    learner = SemiBanditFTPL(experts(), [0], SemiBanditConfig(1.0, 2))
    with pytest.raises(DomainError):
        learner.round(0, [-1.0, -1.0], SeedStream(0))


@pytest.mark.parametrize("L", [0, -1, 1.5])
def test_invalid_cap(L):
    with pytest.raises(DomainError):
        SemiBanditConfig(1.0, L)


def test_default_cap():
    assert default_L(5, 4000) == 142
    assert default_L(5, 1000, separator=True) == 10
    assert default_L(5, 1001, separator=True) == 11
