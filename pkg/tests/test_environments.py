import itertools
import math

import numpy as np
import pytest

from oracle_ftpl.core import ConfigurationError, DomainError, InfeasibleError, linear_term, one_hot
from oracle_ftpl.environments import (
    AdaptiveAdversary,
    HedgeState,
    Interaction,
    ObliviousAdversary,
    adaptive_worst_expert_adversary,
    changepoint_losses,
    compute_regret,
    hedge_choose,
    hedge_update,
    is_separator,
    load_losses_csv,
    make_disjunction_class,
    make_experts_task,
    make_layered_dag,
    make_separator,
    round_robin,
    stochastic_losses,
    write_losses_csv,
)
from oracle_ftpl.oracles import DagOracle, EnumerationOracle, PolicyClass


def test_experts_exhaustive_small():
    pc = make_experts_task(1, 2, 2, seed=0).pc
    assert [p.action(0).tolist() for p in pc.policies] == [[1, 0], [0, 1]]


def test_experts_distinct_and_deterministic():
    a = make_experts_task(5, 5, 100, seed=11).pc
    b = make_experts_task(5, 5, 100, seed=11).pc
    np.testing.assert_array_equal(a.tensor, b.tensor)
    assert len({a.tensor[i].tobytes() for i in range(a.N)}) == 100
    assert np.all(a.tensor.sum(axis=2) == 1)


def test_experts_too_many():
    with pytest.raises(InfeasibleError):
        make_experts_task(2, 2, 5, seed=0)


def test_round_robin():
    s = round_robin(3)
    assert [s(t) for t in range(1, 7)] == [0, 1, 2, 0, 1, 2]


def test_disjunction_example():
    task = make_disjunction_class(3)
    assert task.pc.N == 7
    assert task.separator.contexts == (4, 2, 1)
    assert [task.bits(c) for c in task.separator.contexts] == ["100", "010", "001"]
    x1, x2 = task.pc[0b100 - 1], task.pc[0b010 - 1]
    c = task.context_of("100")
    assert x1.action(c).tolist() == [0, 1] and x2.action(c).tolist() == [1, 0]


def test_disjunction_pairs_differ_on_separator():
    task = make_disjunction_class(4)
    sep = list(task.separator.contexts)
    for a, b in itertools.combinations(task.pc.policies, 2):
        assert not np.array_equal(a.table[sep], b.table[sep])


def test_disjunction_size_limits():
    with pytest.raises(ConfigurationError):
        make_disjunction_class(0)


def test_non_separator_rejected():
    task = make_disjunction_class(3)
    assert not is_separator(task.pc, [4, 2])
    with pytest.raises(ConfigurationError):
        make_separator(task.pc, [4, 2])


def test_layered_dag_counts():
    dag = make_layered_dag(3, 2).dag
    assert dag.count_paths() == 2**3
    assert dag.m == 4
    assert DagOracle(dag).best_policy([linear_term(0, np.zeros(dag.K))]).index == dag.paths()[0]


def test_stochastic_losses_in_range_and_seeded():
    s = round_robin(3)
    a = stochastic_losses(s, 3, 4, 50, np.random.default_rng(1))
    b = stochastic_losses(s, 3, 4, 50, np.random.default_rng(1))
    assert all(np.array_equal(x.linear, y.linear) for x, y in zip(a, b))
    vals = np.array([t.linear for t in a])
    assert vals.min() >= 0 and vals.max() <= 1
    assert [t.context for t in a[:4]] == [0, 1, 2, 0]


def test_changepoint_best_arm_switches():
    seq = changepoint_losses(100, 2, np.random.default_rng(0))
    first = np.array([t.linear for t in seq[:50]])
    second = np.array([t.linear for t in seq[50:]])
    assert np.all(first[:, 0] < first[:, 1]) and np.all(second[:, 1] < second[:, 0])


def test_oblivious_replay():
    seq = [linear_term(0, [0.0, 1.0]), linear_term(1, [1.0, 0.0])]
    adv = ObliviousAdversary(seq)
    assert adv.context(2) == 1 and adv.next(2, []) is seq[1]


def test_adaptive_adversary_examples():
    assert adaptive_worst_expert_adversary([], 0, 3).linear.tolist() == [0, 0, 0]
    hist = [Interaction(0, one_hot(2, 3), linear_term(0, [0, 0, 1]))]
    assert adaptive_worst_expert_adversary(hist, 0, 3).linear.tolist() == [0, 0, 1]
    other = [Interaction(0, one_hot(1, 3), linear_term(0, [0, 1, 0]))]
    adv = AdaptiveAdversary(round_robin(1), 3)
    assert adv.next(2, hist).linear.tolist() != adv.next(2, other).linear.tolist()


def test_losses_csv_round_trip(tmp_path):
    seq = [linear_term(t % 2, [t / 3, 1 - t / 7]) for t in range(5)]
    path = tmp_path / "losses.csv"
    write_losses_csv(path, seq)
    back = load_losses_csv(path)
    assert [t.context for t in back] == [t.context for t in seq]
    assert all(np.array_equal(a.linear, b.linear) for a, b in zip(back, seq))


@pytest.mark.parametrize("text", [
    "t,context,j0\n1,0,0.5\n",
    "round,context,j0\n1,0,0.5,0.1\n",
    "round,context,j0\n1,0,0.5\n3,0,0.5\n",
])
def test_losses_csv_errors(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ConfigurationError):
        load_losses_csv(path)


def test_hedge_zero_losses_stay_uniform():
    pc = make_experts_task(2, 3, 6, seed=0).pc
    state = HedgeState(pc, 1.0)
    for t in range(10):
        hedge_update(state, linear_term(t % 2, [0, 0, 0]))
    np.testing.assert_allclose(state.distribution(), np.full(6, 1 / 6))


def test_hedge_closed_form_weight():
    N = 4
    pc = PolicyClass([one_hot(j, N)[None, :] for j in range(N)])
    state = HedgeState(pc, 1.0)
    for _ in range(10):
        state.update(linear_term(0, [0.0, 1.0, 1.0, 1.0]))
    p, _ = hedge_choose(state, 0)
    target = math.exp(10) / (math.exp(10) + N - 1)
    assert p[0] >= target - 1e-12
    assert np.all(state.weights > 0) and np.all(np.isfinite(state.weights))


def test_hedge_limits():
    pc = PolicyClass([one_hot(0, 2)[None, :]])
    with pytest.raises(ConfigurationError):
        HedgeState(pc, 0.0)
    with pytest.raises(DomainError):
        HedgeState(pc, 1.0).choose(1)


def _two_experts():
    return EnumerationOracle(PolicyClass([one_hot(j, 2)[None, :] for j in range(2)]))


def test_regret_examples():
    oracle = _two_experts()
    zeros = [linear_term(0, [0.0, 0.0])] * 5
    assert compute_regret([0.0] * 5, zeros, oracle).regret_fixed == 0.0
    seq = [linear_term(0, [0.0, 1.0])] * 10
    assert compute_regret([0.0] * 10, seq, oracle).regret_fixed == 0.0
    worse = compute_regret([1.0] * 10, seq, oracle)
    assert worse.regret_fixed == 10.0
    assert worse.cum_regret_fixed.tolist() == list(np.arange(1.0, 11.0))


def test_switching_regret_ledger():
    oracle = _two_experts()
    seq = [linear_term(0, [0.0, 1.0])] * 3 + [linear_term(0, [1.0, 0.0])] * 3
    ledger = compute_regret([0.0, 0.0, 0.0, 1.0, 1.0, 1.0], seq, oracle, k=1)
    assert ledger.regret_fixed == 0.0
    assert ledger.regret_switch == 3.0
    assert ledger.switching.cuts == (3,)


def test_regret_length_mismatch():
    with pytest.raises(DomainError):
        compute_regret([0.0], [], _two_experts())
