"""Task generators, adversaries, the Hedge baseline and post-hoc regret accounting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import (
    ConfigurationError,
    DomainError,
    InfeasibleError,
    LossTerm,
    OutcomeSequence,
    linear_term,
    one_hot,
)
from .oracles import (
    DagInstance,
    EnumerationOracle,
    Oracle,
    PolicyClass,
    SwitchingResult,
    switching_best,
    switching_from_round_losses,
)

# --------------------------------------------------------------------------
# task generators


@dataclass(frozen=True, eq=False)
class ExpertsTask:
    pc: PolicyClass
    schedule: Callable[[int], int]  # 1-based round -> context


def round_robin(d: int) -> Callable[[int], int]:
    return lambda t: (t - 1) % d


def make_experts_task(d: int, K: int, N: int, seed: int) -> ExpertsTask:
    """``N`` distinct random policies mapping ``d`` contexts to one-hot actions."""
    if min(d, K, N) < 1:
        raise ConfigurationError("d, K, N must be positive")
    total = K**d
    if N > total:
        raise InfeasibleError(f"only {total} distinct policies exist for d={d}, K={K}; asked for {N}")
    rng = np.random.default_rng(seed)
    if total <= 2**62:
        codes = [
            tuple((int(c) // K**x) % K for x in range(d))
            for c in np.sort(rng.choice(total, size=N, replace=False))
        ]
    else:
        picked: set[tuple[int, ...]] = set()
        while len(picked) < N:
            picked.add(tuple(int(v) for v in rng.integers(0, K, size=d)))
        codes = sorted(picked, key=lambda digits: digits[::-1])
    tables = []
    for digits in codes:
        table = np.zeros((d, K), dtype=np.int8)
        table[np.arange(d), list(digits)] = 1
        tables.append(table)
    return ExpertsTask(PolicyClass(tables, m=1, feasible=[one_hot(j, K) for j in range(K)]), round_robin(d))


@dataclass(frozen=True)
class SeparatorSet:
    contexts: tuple[int, ...]


def is_separator(pc: PolicyClass, contexts: Sequence[int]) -> bool:
    """Every pair of distinct policies disagrees on some context in ``contexts``."""
    full = {pc.tensor[i].tobytes() for i in range(pc.N)}
    restricted = {pc.tensor[i, list(contexts), :].tobytes() for i in range(pc.N)}
    return len(restricted) == len(full)


def make_separator(pc: PolicyClass, contexts: Sequence[int]) -> SeparatorSet:
    if not is_separator(pc, contexts):
        raise ConfigurationError(f"contexts {tuple(contexts)} do not separate the policy class")
    return SeparatorSet(tuple(int(x) for x in contexts))


@dataclass(frozen=True, eq=False)
class DisjunctionTask:
    """Boolean disjunctions over ``n`` variables.

    Context id ``c`` encodes the vector ``x`` with ``x_i = (c >> (n - 1 - i)) & 1``
    (so ``100`` is ``4`` for ``n = 3``). Action 1 predicts true, action 0 false.
    Policy ``s - 1`` is the disjunction of the variables in bitmask ``s``.
    """

    n: int
    pc: PolicyClass
    separator: SeparatorSet

    def bits(self, c: int) -> str:
        return format(c, f"0{self.n}b")

    def context_of(self, bits: str) -> int:
        return int(bits, 2)


def make_disjunction_class(n: int) -> DisjunctionTask:
    if not 1 <= n <= 16:
        raise ConfigurationError("disjunction class supports 1 <= n <= 16")
    contexts = np.arange(2**n)
    tables = []
    for s in range(1, 2**n):
        # variable i (0-based, leftmost) is bit (n - 1 - i) of both s and the context
        predicts = ((contexts & s) != 0).astype(np.int64)
        table = np.zeros((2**n, 2), dtype=np.int8)
        table[contexts, predicts] = 1
        tables.append(table)
    pc = PolicyClass(tables, m=1, feasible=[one_hot(0, 2), one_hot(1, 2)])
    sep = make_separator(pc, [1 << (n - 1 - i) for i in range(n)])
    return DisjunctionTask(n, pc, sep)


@dataclass(frozen=True, eq=False)
class DagTask:
    dag: DagInstance
    layers: int
    width: int


def make_layered_dag(layers: int, width: int) -> DagTask:
    """source -> ``layers`` layers of ``width`` nodes (complete between layers) -> sink."""
    if layers < 1 or width < 1:
        raise ConfigurationError("layers and width must be positive")
    source, sink = 0, 1
    node = lambda layer, i: 2 + layer * width + i  # noqa: E731
    edges = []
    for i in range(width):
        edges.append((source, node(0, i)))
    for layer in range(layers - 1):
        for i in range(width):
            for k in range(width):
                edges.append((node(layer, i), node(layer + 1, k)))
    for i in range(width):
        edges.append((node(layers - 1, i), sink))
    dag = DagInstance(tuple((u, v, j) for j, (u, v) in enumerate(edges)), source, sink, len(edges))
    return DagTask(dag, layers, width)


# --------------------------------------------------------------------------
# loss sequences and adversaries


def stochastic_losses(
    schedule: Callable[[int], int], d: int, K: int, T: int, rng: np.random.Generator, spread: float = 0.2
) -> list[LossTerm]:
    """Oblivious losses in [0, 1]: per-(context, action) mean in [spread, 1 - spread], uniform jitter of half-width spread."""
    means = rng.uniform(spread, 1.0 - spread, size=(d, K))
    jitter = rng.uniform(-spread, spread, size=(T, K))
    out = []
    for t in range(1, T + 1):
        x = schedule(t)
        out.append(linear_term(x, np.clip(means[x] + jitter[t - 1], 0.0, 1.0)))
    return out


def changepoint_losses(T: int, K: int, rng: np.random.Generator, switch_at: int | None = None, gap: float = 0.4) -> list[LossTerm]:
    """Non-contextual losses whose best arm is 0 before ``switch_at`` and 1 after."""
    if K < 2:
        raise ConfigurationError("changepoint losses need K >= 2")
    switch_at = T // 2 if switch_at is None else switch_at
    out = []
    for t in range(T):
        base = np.full(K, 0.5 + gap / 2)
        base[0 if t < switch_at else 1] = 0.5 - gap / 2
        out.append(linear_term(0, np.clip(base + rng.uniform(-0.1, 0.1, size=K), 0.0, 1.0)))
    return out


@dataclass(frozen=True)
class Interaction:
    context: int
    action: np.ndarray
    outcome: LossTerm


class ObliviousAdversary:
    """Replays a sequence fixed before round 1."""

    def __init__(self, terms: OutcomeSequence):
        self.terms = list(terms)

    def context(self, t: int) -> int:
        return self.terms[t - 1].context

    def next(self, t: int, history: Sequence[Interaction]) -> LossTerm:
        return self.terms[t - 1]


def adaptive_worst_expert_adversary(history: Sequence[Interaction], x_t: int, K: int) -> LossTerm:
    """Loss 1 on the action last played in context ``x_t``, 0 elsewhere."""
    loss = np.zeros(K)
    for rec in reversed(history):
        if rec.context == x_t:
            loss = rec.action.astype(np.float64)
            break
    return linear_term(x_t, loss)


class AdaptiveAdversary:
    """Reacts to the interaction history; never sees the current round's noise."""

    def __init__(self, schedule: Callable[[int], int], K: int,
                 respond: Callable[[Sequence[Interaction], int, int], LossTerm] = adaptive_worst_expert_adversary):
        self.schedule = schedule
        self.K = K
        self.respond = respond

    def context(self, t: int) -> int:
        return self.schedule(t)

    def next(self, t: int, history: Sequence[Interaction]) -> LossTerm:
        return self.respond(history, self.schedule(t), self.K)


def load_losses_csv(path: str | Path) -> list[LossTerm]:
    """Read ``round,context,j0,...,j{K-1}`` rows into an oblivious sequence ordered by round."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["round", "context"] or len(header) < 3:
            raise ConfigurationError("loss CSV header must be round,context,j0,...")
        K = len(header) - 2
        if header[2:] != [f"j{j}" for j in range(K)]:
            raise ConfigurationError(f"loss CSV columns must be j0..j{K - 1}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != K + 2:
                raise ConfigurationError(f"line {lineno}: expected {K + 2} fields, got {len(row)}")
            rows.append((int(row[0]), int(row[1]), [float(v) for v in row[2:]]))
    rows.sort(key=lambda r: r[0])
    rounds = [r[0] for r in rows]
    if rounds and rounds != list(range(rounds[0], rounds[0] + len(rounds))):
        raise ConfigurationError("loss CSV rounds must be consecutive")
    return [linear_term(x, vec) for _, x, vec in rows]


def write_losses_csv(path: str | Path, terms: OutcomeSequence) -> None:
    K = len(terms[0].linear) if terms else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "context"] + [f"j{j}" for j in range(K)])
        for t, term in enumerate(terms, start=1):
            w.writerow([t, term.context] + [repr(float(v)) for v in term.linear])


# --------------------------------------------------------------------------
# Hedge baseline


class HedgeState:
    """Exponential weights over an explicit policy list (log-domain weights)."""

    MAX_POLICIES = 10_000

    def __init__(self, pc: PolicyClass, eta: float):
        if pc.N > self.MAX_POLICIES:
            raise ConfigurationError(f"Hedge enumerates policies; N={pc.N} > {self.MAX_POLICIES}")
        if not eta > 0:
            raise ConfigurationError("eta must be positive")
        self.pc = pc
        self.eta = float(eta)
        self.log_w = np.zeros(pc.N)

    @staticmethod
    def default_eta(N: int, T: int) -> float:
        return math.sqrt(8.0 * math.log(max(N, 2)) / max(T, 1))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_w - self.log_w.max())

    def distribution(self) -> np.ndarray:
        w = self.weights
        return w / w.sum()

    def choose(self, x_t: int, rng: np.random.Generator | None = None) -> tuple[np.ndarray, int | None]:
        if not 0 <= x_t < self.pc.d:
            raise DomainError(f"context {x_t} not registered")
        p = self.distribution()
        return p, (int(rng.choice(self.pc.N, p=p)) if rng is not None else None)

    def update(self, y_t: LossTerm) -> HedgeState:
        self.log_w = self.log_w - self.eta * self.pc.term_losses(y_t)
        return self


def hedge_choose(state: HedgeState, x_t: int, rng: np.random.Generator | None = None):
    return state.choose(x_t, rng)


def hedge_update(state: HedgeState, y_t: LossTerm) -> HedgeState:
    return state.update(y_t)


# --------------------------------------------------------------------------
# regret accounting


@dataclass
class RegretLedger:
    learner_losses: np.ndarray
    fixed_losses: np.ndarray
    switch_losses: np.ndarray | None = None
    bound: np.ndarray | None = None
    oracle_calls: np.ndarray | None = None
    switching: SwitchingResult | None = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return len(self.learner_losses)

    @property
    def cum_regret_fixed(self) -> np.ndarray:
        return np.cumsum(self.learner_losses - self.fixed_losses)

    @property
    def cum_regret_switch(self) -> np.ndarray | None:
        if self.switch_losses is None:
            return None
        return np.cumsum(self.learner_losses - self.switch_losses)

    @property
    def regret_fixed(self) -> float:
        return float(np.sum(self.learner_losses) - np.sum(self.fixed_losses))

    @property
    def regret_switch(self) -> float | None:
        if self.switch_losses is None:
            return None
        return float(np.sum(self.learner_losses) - np.sum(self.switch_losses))


def compute_regret(
    learner_losses: Sequence[float], seq: OutcomeSequence, oracle: Oracle, k: int | None = None
) -> RegretLedger:
    """Regret against the best fixed policy (one oracle call) and, if ``k`` is given, the best ``k``-switching sequence."""
    learner = np.asarray(learner_losses, dtype=np.float64)
    if len(learner) != len(seq):
        raise DomainError("need one learner loss per round")
    if not seq:
        return RegretLedger(learner, np.zeros(0), None if k is None else np.zeros(0))
    best = oracle.best_policy(seq)
    fixed = np.array([term.loss(best.action(term.context)) for term in seq])
    ledger = RegretLedger(learner, fixed)
    if k is not None:
        if isinstance(oracle, EnumerationOracle):
            result = switching_from_round_losses(oracle.round_losses([[t] for t in seq]), k, oracle.pc.policies)
        else:
            result = switching_best([[t] for t in seq], k, oracle)
        per_round = np.zeros(len(seq))
        for seg in result.segments:
            for t in range(seg.start, seg.stop):
                per_round[t] = seq[t].loss(seg.policy.action(seq[t].context))
        ledger.switch_losses = per_round
        ledger.switching = result
    return ledger
