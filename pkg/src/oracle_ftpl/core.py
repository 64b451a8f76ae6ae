"""Shared domain types: actions, policies, loss terms and the linear sufficient statistic.

Contexts are small integers ``0 <= x < d`` registered up front. An action is a
binary vector of length ``K``; a policy is a ``(d, K)`` table of actions, one
row per context. A loss term is one round's outcome: a context plus either a
linear loss vector or an explicit table over feasible actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the registered domain (context, round, probability)."""


class ConfigurationError(ValueError):
    """A component was configured inconsistently (empty class, unknown setting, ...)."""


class InfeasibleError(ValueError):
    """The requested object does not exist (no path, too many distinct policies, ...)."""


class UnsupportedPayloadError(TypeError):
    """A general (tabulated) loss reached an operation that needs linear losses."""


ActionKey = tuple[int, ...]


def as_action(bits: Iterable[int] | np.ndarray, m: int | None = None) -> np.ndarray:
    """Validate and return a binary action vector as a read-only int8 array."""
    a = np.asarray(bits)
    if a.ndim != 1 or a.size == 0:
        raise DomainError(f"action must be a non-empty 1-d vector, got shape {a.shape}")
    if not np.all((a == 0) | (a == 1)):
        raise DomainError(f"action has non-binary coordinates: {a.tolist()}")
    a = a.astype(np.int8)
    if m is not None and int(a.sum()) > m:
        raise DomainError(f"action popcount {int(a.sum())} exceeds sparsity bound m={m}")
    a.setflags(write=False)
    return a


def action_key(a: np.ndarray | Sequence[int]) -> ActionKey:
    return tuple(int(v) for v in a)


def one_hot(j: int, K: int) -> np.ndarray:
    a = np.zeros(K, dtype=np.int8)
    a[j] = 1
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LossTerm:
    """One round's outcome ``(x, f)``.

    Exactly one of ``linear`` (length-K vector, ``f(a) = <a, l>``) or
    ``general`` (mapping action key -> loss) is set.
    """

    context: int
    linear: np.ndarray | None = None
    general: Mapping[ActionKey, float] | None = None

    def __post_init__(self) -> None:
        if (self.linear is None) == (self.general is None):
            raise ValueError("LossTerm needs exactly one of linear / general")
        if int(self.context) != self.context or self.context < 0:
            raise DomainError(f"context must be a non-negative integer, got {self.context!r}")
        object.__setattr__(self, "context", int(self.context))
        if self.linear is not None:
            vec = np.array(self.linear, dtype=np.float64)
            if vec.ndim != 1:
                raise ValueError("linear payload must be a 1-d vector")
            vec.setflags(write=False)
            object.__setattr__(self, "linear", vec)
        else:
            table = {action_key(k): float(v) for k, v in self.general.items()}
            object.__setattr__(self, "general", table)

    @property
    def is_linear(self) -> bool:
        return self.linear is not None

    def loss(self, action: np.ndarray) -> float:
        if self.linear is not None:
            if len(action) != len(self.linear):
                raise DomainError(f"action length {len(action)} != K={len(self.linear)}")
            return _dot(action, self.linear)
        try:
            return self.general[action_key(action)]
        except KeyError:
            raise DomainError(f"general loss has no entry for action {action_key(action)}") from None

    def sup_norm(self, feasible: Iterable[np.ndarray] | None = None) -> float:
        """``max_a |f(a)|`` over ``feasible`` (defaults to the table's own keys).

        A linear term without an explicit feasible set falls back to the
        unconstrained bound ``sum_j |l(j)|``.
        """
        if feasible is not None:
            return max(abs(self.loss(np.asarray(a))) for a in feasible)
        if self.general is not None:
            return max(abs(v) for v in self.general.values())
        return float(np.abs(self.linear).sum())


def linear_term(context: int, loss: Sequence[float] | np.ndarray) -> LossTerm:
    return LossTerm(context, linear=np.asarray(loss, dtype=np.float64))


def general_term(context: int, table: Mapping[ActionKey, float]) -> LossTerm:
    return LossTerm(context, general=table)


def _dot(action: np.ndarray, vec: np.ndarray) -> float:
    # left-to-right over selected coordinates so sums match brute-force evaluation
    total = 0.0
    for j in np.flatnonzero(action):
        total += float(vec[j])
    return total


@dataclass(frozen=True, eq=False)
class Policy:
    """A total map from the ``d`` registered contexts to feasible actions.

    ``index`` is the tie-breaking key: an int for enumerated classes, a tuple
    for implicit classes (DAG paths, switching sequences). Smaller wins.
    """

    index: Any
    table: np.ndarray
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        t = np.array(self.table, dtype=np.int8)
        if t.ndim != 2:
            raise ValueError(f"policy table must be (d, K), got shape {t.shape}")
        if not np.all((t == 0) | (t == 1)):
            raise DomainError("policy table has non-binary entries")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def d(self) -> int:
        return self.table.shape[0]

    @property
    def K(self) -> int:
        return self.table.shape[1]

    def action(self, x: int) -> np.ndarray:
        if not 0 <= x < self.d:
            raise DomainError(f"context {x} not registered (d={self.d})")
        return self.table[x]

    def same_map(self, other: Policy) -> bool:
        return self.table.shape == other.table.shape and bool(np.array_equal(self.table, other.table))

    def __repr__(self) -> str:
        return f"Policy(index={self.index!r}, d={self.d}, K={self.K})"


OutcomeSequence = Sequence[LossTerm]


def cumulative_loss(policy: Policy, seq: OutcomeSequence) -> float:
    """Total loss ``sum_t f^t(pi(x^t))`` of a fixed policy on ``seq``."""
    total = 0.0
    for term in seq:
        total += term.loss(policy.action(term.context))
    return total


def accumulate_statistic(seq: OutcomeSequence, d: int, K: int) -> np.ndarray:
    """Per-context, per-coordinate cumulative linear loss, shape ``(d, K)``."""
    phi = np.zeros((d, K), dtype=np.float64)
    for term in seq:
        if not term.is_linear:
            raise UnsupportedPayloadError("sufficient statistic is only defined for linear losses")
        if not 0 <= term.context < d:
            raise DomainError(f"context {term.context} not registered (d={d})")
        if term.linear.shape != (K,):
            raise DomainError(f"loss vector has {term.linear.size} coordinates, expected K={K}")
        phi[term.context] += term.linear
    return phi


def statistic_loss(policy: Policy, phi: np.ndarray) -> float:
    """Loss of ``policy`` from the sufficient statistic: ``sum_x <pi(x), phi_x>``."""
    return float(np.sum(policy.table * phi))
