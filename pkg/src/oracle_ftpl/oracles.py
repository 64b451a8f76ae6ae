"""Offline optimization oracles.

Every oracle answers ``best_policy(seq)``: the policy minimizing cumulative
loss on ``seq``, with deterministic tie-breaking towards the smallest
``Policy.index``. Oracles that admit it also expose
``best_from_statistic(phi)``, the same query phrased through the linear
sufficient statistic (what the learners use on their hot path).
"""

from __future__ import annotations

import graphlib
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .core import (
    ConfigurationError,
    DomainError,
    InfeasibleError,
    LossTerm,
    OutcomeSequence,
    Policy,
    UnsupportedPayloadError,
    accumulate_statistic,
    action_key,
    cumulative_loss,
    linear_term,
)


class Oracle(Protocol):
    d: int
    K: int

    def best_policy(self, seq: OutcomeSequence) -> Policy: ...

    def best_from_statistic(self, phi: np.ndarray) -> Policy: ...


# --------------------------------------------------------------------------
# finite policy classes


class PolicyClass:
    """An ordered finite policy class; ``policies[i].index == i``."""

    def __init__(self, tables: Sequence[np.ndarray], m: int | None = None, feasible: Sequence[np.ndarray] | None = None):
        if len(tables) == 0:
            raise ConfigurationError("policy class is empty")
        tensor = np.stack([np.asarray(t, dtype=np.int8) for t in tables])
        if tensor.ndim != 3:
            raise ConfigurationError(f"policy tables must all be (d, K), got {tensor.shape}")
        self.N, self.d, self.K = tensor.shape
        popcounts = tensor.sum(axis=2)
        self.m = int(popcounts.max()) if m is None else int(m)
        if popcounts.max() > self.m:
            raise ConfigurationError(f"some policy action exceeds sparsity bound m={self.m}")
        tensor.setflags(write=False)
        self.tensor = tensor
        self.policies = tuple(Policy(i, tensor[i]) for i in range(self.N))

        if feasible is None:
            rows = {action_key(a): None for a in tensor.reshape(-1, self.K)}
            feasible = [np.array(k, dtype=np.int8) for k in sorted(rows)]
        self.feasible = tuple(np.asarray(a, dtype=np.int8) for a in feasible)
        self._feasible_id = {action_key(a): i for i, a in enumerate(self.feasible)}
        try:
            self.action_ids = np.array(
                [[self._feasible_id[action_key(tensor[i, x])] for x in range(self.d)] for i in range(self.N)]
            )
        except KeyError as exc:
            raise ConfigurationError(f"policy uses an action outside the feasible set: {exc}") from None

    def __len__(self) -> int:
        return self.N

    def __getitem__(self, i: int) -> Policy:
        return self.policies[i]

    def feasible_id(self, a: np.ndarray) -> int:
        return self._feasible_id[action_key(a)]

    def term_losses(self, term: LossTerm) -> np.ndarray:
        """Loss of every policy on a single term, shape ``(N,)``."""
        x = term.context
        if not 0 <= x < self.d:
            raise DomainError(f"context {x} not registered (d={self.d})")
        if term.is_linear:
            if term.linear.shape != (self.K,):
                raise DomainError(f"loss vector has {term.linear.size} coordinates, expected K={self.K}")
            return self.tensor[:, x, :] @ term.linear
        missing = [action_key(a) for a in self.feasible if action_key(a) not in term.general]
        if missing:
            raise DomainError(f"general loss does not cover feasible actions {missing[:3]}")
        table = np.array([term.general[action_key(a)] for a in self.feasible])
        return table[self.action_ids[:, x]]


class EnumerationOracle:
    """Exhaustive argmin over a finite :class:`PolicyClass`."""

    def __init__(self, pc: PolicyClass):
        self.pc = pc
        self.d, self.K, self.m = pc.d, pc.K, pc.m
        self._flat = pc.tensor.reshape(pc.N, -1).astype(np.float64)

    def policy_losses(self, seq: OutcomeSequence) -> np.ndarray:
        linear = [t for t in seq if t.is_linear]
        general = [t for t in seq if not t.is_linear]
        losses = self.statistic_losses(accumulate_statistic(linear, self.d, self.K))
        for term in general:
            losses = losses + self.pc.term_losses(term)
        return losses

    def statistic_losses(self, phi: np.ndarray) -> np.ndarray:
        return self._flat @ np.asarray(phi, dtype=np.float64).ravel()

    def best_policy(self, seq: OutcomeSequence) -> Policy:
        return self.pc[int(np.argmin(self.policy_losses(seq)))]

    def best_from_statistic(self, phi: np.ndarray) -> Policy:
        return self.pc[int(np.argmin(self.statistic_losses(phi)))]

    def round_losses(self, rounds: Sequence[OutcomeSequence]) -> np.ndarray:
        """Per-round, per-policy losses, shape ``(T, N)``."""
        out = np.zeros((len(rounds), self.pc.N))
        for t, terms in enumerate(rounds):
            for term in terms:
                out[t] += self.pc.term_losses(term)
        return out


def enumeration_best_policy(pc: PolicyClass, seq: OutcomeSequence) -> Policy:
    return EnumerationOracle(pc).best_policy(seq)


# --------------------------------------------------------------------------
# DAG shortest path


@dataclass(frozen=True)
class DagInstance:
    """Edges ``(u, v, edge_id)`` of a DAG; a path's action is its edge incidence vector."""

    edges: tuple[tuple[int, int, int], ...]
    source: int
    sink: int
    K: int
    nodes: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        edges = tuple((int(u), int(v), int(j)) for u, v, j in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.source == self.sink:
            raise ConfigurationError("source and sink must differ")
        ids = [j for _, _, j in edges]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("edge ids must be unique")
        if any(not 0 <= j < self.K for j in ids):
            raise ConfigurationError(f"edge ids must lie in [0, {self.K})")
        ts = graphlib.TopologicalSorter()
        ts.add(self.source)
        ts.add(self.sink)
        for u, v, _ in edges:
            ts.add(v, u)
        try:
            order = tuple(ts.static_order())
        except graphlib.CycleError as exc:
            raise ConfigurationError(f"graph has a cycle: {exc.args[1]}") from None
        object.__setattr__(self, "nodes", order)

    def out_edges(self) -> dict[int, list[tuple[int, int]]]:
        out: dict[int, list[tuple[int, int]]] = {n: [] for n in self.nodes}
        for u, v, j in self.edges:
            out[u].append((j, v))
        for lst in out.values():
            lst.sort()
        return out

    def incidence(self, path: Sequence[int]) -> np.ndarray:
        a = np.zeros(self.K, dtype=np.int8)
        a[list(path)] = 1
        return a

    @property
    def m(self) -> int:
        """Longest source-sink path length in edges."""
        longest = {n: -1 for n in self.nodes}
        longest[self.source] = 0
        out = self.out_edges()
        for u in self.nodes:
            if longest[u] < 0:
                continue
            for _, v in out[u]:
                longest[v] = max(longest[v], longest[u] + 1)
        return max(longest[self.sink], 0)

    def count_paths(self) -> int:
        count = {n: 0 for n in self.nodes}
        count[self.source] = 1
        out = self.out_edges()
        for u in self.nodes:
            for _, v in out[u]:
                count[v] += count[u]
        return count[self.sink]

    def paths(self) -> list[tuple[int, ...]]:
        """All source-sink paths as edge-id tuples, in lexicographic order."""
        out = self.out_edges()
        found: list[tuple[int, ...]] = []

        def walk(u: int, prefix: tuple[int, ...]) -> None:
            if u == self.sink:
                found.append(prefix)
                return
            for j, v in out[u]:
                walk(v, prefix + (j,))

        walk(self.source, ())
        return sorted(found)


def parse_dag(text: str) -> DagInstance:
    """Parse ``dag K source sink`` followed by ``u v edge_id`` lines."""
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0][0] != "dag" or len(lines[0]) != 4:
        raise ConfigurationError("expected header line 'dag K source sink'")
    K, source, sink = (int(v) for v in lines[0][1:])
    edges = []
    for i, parts in enumerate(lines[1:], start=2):
        if len(parts) != 3:
            raise ConfigurationError(f"line {i}: expected 'u v edge_id', got {' '.join(parts)!r}")
        edges.append(tuple(int(p) for p in parts))
    return DagInstance(tuple(edges), source, sink, K)


def format_dag(dag: DagInstance) -> str:
    lines = [f"dag {dag.K} {dag.source} {dag.sink}"]
    lines += [f"{u} {v} {j}" for u, v, j in dag.edges]
    return "\n".join(lines) + "\n"


class DagOracle:
    """Shortest source-sink path under accumulated (possibly negative) edge costs.

    Non-contextual: ``d == 1``. Among minimum-cost paths the lexicographically
    smallest edge-id sequence wins; the returned policy's index is that sequence.
    """

    d = 1

    def __init__(self, dag: DagInstance):
        self.dag = dag
        self.K = dag.K
        self.m = dag.m
        self._out = dag.out_edges()

    def best_policy(self, seq: OutcomeSequence) -> Policy:
        if any(not t.is_linear for t in seq):
            raise UnsupportedPayloadError("DAG oracle needs linear edge costs")
        return self.best_from_statistic(accumulate_statistic(seq, 1, self.K))

    def best_from_statistic(self, phi: np.ndarray) -> Policy:
        costs = np.asarray(phi, dtype=np.float64).reshape(-1)
        best: dict[int, tuple[float, tuple[int, ...]]] = {self.dag.source: (0.0, ())}
        for u in self.dag.nodes:
            if u not in best:
                continue
            cu, pu = best[u]
            for j, v in self._out[u]:
                cand = (cu + float(costs[j]), pu + (j,))
                if v not in best or cand < best[v]:
                    best[v] = cand
        if self.dag.sink not in best:
            raise InfeasibleError(f"no path from {self.dag.source} to {self.dag.sink}")
        path = best[self.dag.sink][1]
        return Policy(path, self.dag.incidence(path)[None, :])


def dag_best_policy(dag: DagInstance, seq: OutcomeSequence) -> Policy:
    return DagOracle(dag).best_policy(seq)


def path_policy_class(dag: DagInstance) -> PolicyClass:
    """The DAG's paths as an explicit class; index order equals lexicographic path order."""
    paths = dag.paths()
    if not paths:
        raise InfeasibleError("DAG has no source-sink path")
    return PolicyClass([dag.incidence(p)[None, :] for p in paths], m=dag.m)


# --------------------------------------------------------------------------
# switching


@dataclass(frozen=True)
class Segment:
    start: int  # inclusive, 0-based round
    stop: int  # exclusive
    policy: Policy


@dataclass(frozen=True)
class SwitchingResult:
    segments: tuple[Segment, ...]
    total: float

    def policy_indices(self) -> list:
        """Base-policy index played at each round."""
        out = []
        for seg in self.segments:
            out += [seg.policy.index] * (seg.stop - seg.start)
        return out

    @property
    def cuts(self) -> tuple[int, ...]:
        return tuple(seg.start for seg in self.segments[1:])


class SwitchingIndex:
    """Best policy sequence with at most ``k`` switches over a growing horizon.

    ``rounds[t]`` holds the outcome terms of round ``t`` (in base contexts).
    ``R(t, q) = min_{tau < t} R(tau, q-1) + L(M(y[tau:t]), y[tau:t])`` with
    ``R(0, .) = 0``; ``tau = 0`` is the single-segment option, so fewer
    switches are always admissible. Ties: smallest tau, then base tie rule.

    Interval answers are memoized by ``(tau1, tau2)``; serving all prefixes
    ``1..T`` of a fixed sequence therefore costs ``T(T+1)/2`` base calls.
    """

    def __init__(self, base: Oracle, k: int, rounds: Sequence[OutcomeSequence] = ()):
        if k < 0:
            raise ConfigurationError("switch budget k must be >= 0")
        self.base = base
        self.k = int(k)
        self.rounds: list[list[LossTerm]] = [list(r) for r in rounds]
        self.interval_cache: dict[tuple[int, int], tuple[Policy, float]] = {}
        self.base_calls = 0

    @property
    def horizon(self) -> int:
        return len(self.rounds)

    def extend(self, terms: OutcomeSequence) -> None:
        self.rounds.append(list(terms))

    def interval(self, a: int, b: int) -> tuple[Policy, float]:
        key = (a, b)
        hit = self.interval_cache.get(key)
        if hit is None:
            seq = [term for r in self.rounds[a:b] for term in r]
            pol = self.base.best_policy(seq)
            self.base_calls += 1
            hit = (pol, cumulative_loss(pol, seq))
            self.interval_cache[key] = hit
        return hit

    def solve(self, t: int | None = None) -> SwitchingResult:
        T = self.horizon if t is None else t
        if not 1 <= T <= self.horizon:
            raise DomainError(f"prefix length {T} outside 1..{self.horizon}")
        # R[q][s]: best loss on rounds [0, s) with <= q switches; arg[q][s]: start of last segment
        R = [[0.0] * (T + 1) for _ in range(self.k + 1)]
        arg = [[0] * (T + 1) for _ in range(self.k + 1)]
        for s in range(1, T + 1):
            R[0][s] = self.interval(0, s)[1]
        for q in range(1, self.k + 1):
            for s in range(1, T + 1):
                best, best_tau = R[0][s], 0
                for tau in range(1, s):
                    val = R[q - 1][tau] + self.interval(tau, s)[1]
                    if val < best:
                        best, best_tau = val, tau
                R[q][s], arg[q][s] = best, best_tau
        return self._backtrack(R, arg, T, lambda a, b: self.interval(a, b)[0])

    def _backtrack(self, R, arg, T: int, policy_of) -> SwitchingResult:
        segments = []
        s, q = T, self.k
        while s > 0:
            tau = arg[q][s] if q > 0 else 0
            segments.append(Segment(tau, s, policy_of(tau, s)))
            s, q = tau, q - 1
        return SwitchingResult(tuple(reversed(segments)), float(R[self.k][T]))


def _vectorized_switching(base: EnumerationOracle, rounds: Sequence[OutcomeSequence], k: int) -> SwitchingResult:
    """Same recursion and tie rules as :class:`SwitchingIndex`, via prefix sums.

    Interval losses are ``P[b] - P[a]`` on per-policy prefix sums, so values
    agree with the memoized path up to float reassociation.
    """
    per_round = base.round_losses(rounds)
    return switching_from_round_losses(per_round, k, base.pc.policies)


def switching_from_round_losses(per_round: np.ndarray, k: int, policies: Sequence[Policy]) -> SwitchingResult:
    T, _ = per_round.shape
    P = np.vstack([np.zeros(per_round.shape[1]), np.cumsum(per_round, axis=0)])
    diff = P[None, :, :] - P[:, None, :]  # diff[a, b] = loss on rounds [a, b)
    best_pol = np.argmin(diff, axis=2)
    C = np.take_along_axis(diff, best_pol[:, :, None], axis=2)[:, :, 0]
    invalid = np.tril(np.ones((T + 1, T + 1), dtype=bool))  # need a < b
    C = np.where(invalid, np.inf, C)

    R = np.zeros((k + 1, T + 1))
    arg = np.zeros((k + 1, T + 1), dtype=np.int64)
    R[0, 1:] = C[0, 1:]
    for q in range(1, k + 1):
        prev = R[q - 1].copy()
        prev[0] = 0.0
        cand = prev[:, None] + C  # cand[tau, s]
        arg[q] = np.argmin(cand, axis=0)
        R[q] = cand[arg[q], np.arange(T + 1)]
        R[q, 0] = 0.0
    segments = []
    s, q = T, k
    while s > 0:
        tau = int(arg[q, s]) if q > 0 else 0
        segments.append(Segment(tau, s, policies[int(best_pol[tau, s])]))
        s, q = tau, q - 1
    return SwitchingResult(tuple(reversed(segments)), float(R[k, T]))


def switching_best(rounds: Sequence[OutcomeSequence], k: int, base: Oracle) -> SwitchingResult:
    """Minimum-loss policy sequence with at most ``k`` switches over ``rounds``."""
    if len(rounds) < 1:
        raise DomainError("switching_best needs T >= 1 rounds")
    return SwitchingIndex(base, k, rounds).solve()


class AugmentedOracle:
    """Oracle over ``k``-switching sequences, with the round index as context.

    Augmented context ``t`` stands for ``(t, schedule[t])``; a term with
    context ``t`` is re-addressed to base context ``schedule[t]`` and solved
    as round ``t`` of a switching problem over the full horizon. The returned
    policy's table row ``t`` is the action the sequence plays at round ``t``.
    """

    def __init__(self, base: Oracle, schedule: Sequence[int], k: int, vectorize: bool = True):
        if len(schedule) < 1:
            raise ConfigurationError("augmented oracle needs a horizon T >= 1")
        self.base = base
        self.schedule = tuple(int(x) for x in schedule)
        self.k = int(k)
        self.d = len(self.schedule)
        self.K = base.K
        self.m = getattr(base, "m", None)
        self.vectorize = vectorize and isinstance(base, EnumerationOracle)
        self.interval_evaluations = 0

    def _rounds(self, seq: OutcomeSequence) -> list[list[LossTerm]]:
        rounds: list[list[LossTerm]] = [[] for _ in range(self.d)]
        for term in seq:
            if not 0 <= term.context < self.d:
                raise DomainError(f"round {term.context} beyond horizon T={self.d}")
            x = self.schedule[term.context]
            payload = {"linear": term.linear} if term.is_linear else {"general": term.general}
            rounds[term.context].append(LossTerm(x, **payload))
        return rounds

    def solve(self, seq: OutcomeSequence) -> SwitchingResult:
        rounds = self._rounds(seq)
        T = self.d
        if self.vectorize:
            self.interval_evaluations += T * (T + 1) // 2
            return _vectorized_switching(self.base, rounds, self.k)
        index = SwitchingIndex(self.base, self.k, rounds)
        result = index.solve()
        self.interval_evaluations += index.base_calls
        return result

    def best_policy(self, seq: OutcomeSequence) -> Policy:
        return self.to_policy(self.solve(seq))

    def best_from_statistic(self, phi: np.ndarray) -> Policy:
        phi = np.asarray(phi, dtype=np.float64)
        if phi.shape != (self.d, self.K):
            raise DomainError(f"augmented statistic must have shape {(self.d, self.K)}")
        if self.vectorize:
            self.interval_evaluations += self.d * (self.d + 1) // 2
            per_round = np.einsum("ntk,tk->tn", self.base.pc.tensor[:, self.schedule, :], phi)
            return self.to_policy(switching_from_round_losses(per_round, self.k, self.base.pc.policies))
        return self.best_policy([linear_term(t, phi[t]) for t in range(self.d)])

    def to_policy(self, result: SwitchingResult) -> Policy:
        table = np.zeros((self.d, self.K), dtype=np.int8)
        for seg in result.segments:
            for t in range(seg.start, seg.stop):
                table[t] = seg.policy.action(self.schedule[t])
        index = tuple((seg.start, seg.policy.index) for seg in result.segments)
        return Policy(index, table, meta={"switching": result})


def augmented_oracle(base: Oracle, schedule: Sequence[int], k: int) -> AugmentedOracle:
    return AugmentedOracle(base, schedule, k)


def count_switching_policies(T: int, N: int, k: int) -> int:
    """Number of distinct per-round policy sequences with at most ``k`` changes."""
    return sum(math.comb(T - 1, s) * N * (N - 1) ** s for s in range(min(k, T - 1) + 1))
