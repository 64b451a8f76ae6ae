"""Perturbed-leader learners driven only through an optimization oracle.

* :class:`FtplState` -- contextual FTPL with Laplace fake samples, full
  information; ``optimistic_choose`` adds a predicted loss term.
* :class:`SemiBanditFTPL` -- semi-bandit feedback, proxy losses built by
  geometric resampling of the same perturbed oracle call.

Randomness: a learner is handed one :class:`SeedStream` per round and
derives ``(PLAY, 0)`` for the played noise and ``(RESAMPLE, j)`` for the
resampling attempts of element ``j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import DomainError, LossTerm, OutcomeSequence, Policy, linear_term
from .oracles import Oracle
from .perturbation import FakeSampleSet, LaplaceSpec, Purpose, SeedStream, draw_fake_samples

Predictor = Callable[[int, OutcomeSequence, int], LossTerm]


class FtplState:
    """Contextual FTPL: play ``M({z} + y[1:t-1])`` with fresh Laplace samples ``{z}`` each round.

    ``noise_contexts`` is the set ``X`` receiving fake samples: the arriving
    contexts (transductive) or a separator.
    """

    def __init__(self, oracle: Oracle, noise_contexts: Sequence[int], epsilon: float):
        self.oracle = oracle
        self.d, self.K = oracle.d, oracle.K
        self.noise_contexts = tuple(int(x) for x in noise_contexts)
        if any(not 0 <= x < self.d for x in self.noise_contexts):
            raise DomainError("noise contexts must be registered contexts")
        self.spec = LaplaceSpec(epsilon)
        self.history: list[LossTerm] = []
        self.phi = np.zeros((self.d, self.K))
        self.all_linear = True
        self.oracle_calls = 0
        self._pending: int | None = None
        self._dense_noise = self.noise_contexts == tuple(range(self.d))

    @property
    def t(self) -> int:
        """Current (1-based) round."""
        return len(self.history) + 1

    def draw(self, stream: SeedStream | np.random.Generator) -> FakeSampleSet:
        return draw_fake_samples(self.noise_contexts, self.K, self.spec, stream)

    def leader(self, fake: FakeSampleSet, extra: LossTerm | None = None) -> Policy:
        """One oracle call on ``{z} + history (+ extra)``."""
        self.oracle_calls += 1
        if self.all_linear and (extra is None or extra.is_linear):
            stat = self.phi + (fake.losses if self._dense_noise else fake.statistic(self.d))
            if extra is not None:
                stat[extra.context] += extra.linear
            return self.oracle.best_from_statistic(stat)
        seq = fake.terms() + self.history + ([extra] if extra is not None else [])
        return self.oracle.best_policy(seq)

    def _check_context(self, x_t: int) -> None:
        if not 0 <= x_t < self.d:
            raise DomainError(f"context {x_t} not registered (d={self.d})")

    def choose(self, x_t: int, stream: SeedStream) -> Policy:
        self._check_context(x_t)
        self._pending = x_t
        return self.leader(self.draw(stream.child(Purpose.PLAY, 0)))

    def optimistic_choose(self, x_t: int, predictor: Predictor, stream: SeedStream) -> Policy:
        """``M({z} + y[1:t-1] + (x_t, Q_t))``; same noise path as :meth:`choose`."""
        self._check_context(x_t)
        self._pending = x_t
        guess = predictor(self.t, tuple(self.history), x_t)
        if guess.context != x_t:
            raise DomainError("predictor must return a term for the current context")
        return self.leader(self.draw(stream.child(Purpose.PLAY, 0)), extra=guess)

    def update(self, y_t: LossTerm) -> FtplState:
        if self._pending is not None and y_t.context != self._pending:
            raise DomainError(f"outcome context {y_t.context} != round context {self._pending}")
        self._check_context(y_t.context)
        if y_t.is_linear:
            if y_t.linear.shape != (self.K,):
                raise DomainError(f"loss vector has {y_t.linear.size} coordinates, expected K={self.K}")
            self.phi[y_t.context] += y_t.linear
        else:
            self.all_linear = False
        self.history.append(y_t)
        self._pending = None
        return self


def ftpl_choose(state: FtplState, x_t: int, stream: SeedStream) -> Policy:
    return state.choose(x_t, stream)


def ftpl_update(state: FtplState, y_t: LossTerm) -> FtplState:
    return state.update(y_t)


def optimistic_choose(state: FtplState, x_t: int, predictor: Predictor, stream: SeedStream) -> Policy:
    return state.optimistic_choose(x_t, predictor, stream)


# --------------------------------------------------------------------------
# predictors


def zero_predictor(K: int) -> Predictor:
    def predict(t: int, history: OutcomeSequence, x_t: int) -> LossTerm:
        return linear_term(x_t, np.zeros(K))

    return predict


def previous_loss_predictor(K: int) -> Predictor:
    """``Q_t = f_{t-1}`` moved to the current context; zero on the first round."""

    def predict(t: int, history: OutcomeSequence, x_t: int) -> LossTerm:
        if not history:
            return linear_term(x_t, np.zeros(K))
        last = history[-1]
        if last.is_linear:
            return linear_term(x_t, last.linear)
        return LossTerm(x_t, general=last.general)

    return predict


def clairvoyant_predictor(sequence: OutcomeSequence) -> Predictor:
    """Predicts the true outcome of an oblivious sequence (``Q_t = f_t``)."""

    def predict(t: int, history: OutcomeSequence, x_t: int) -> LossTerm:
        return sequence[t - 1]

    return predict


# --------------------------------------------------------------------------
# semi-bandit


@dataclass(frozen=True)
class SemiBanditConfig:
    epsilon: float
    L: int

    def __post_init__(self) -> None:
        if int(self.L) != self.L or self.L < 1:
            raise DomainError(f"resampling cap L must be a positive integer, got {self.L}")
        LaplaceSpec(self.epsilon)


@dataclass(frozen=True)
class SemiBanditRound:
    policy: Policy
    played: np.ndarray
    proxy: LossTerm
    resample_counts: dict[int, int]
    oracle_calls: int


class SemiBanditFTPL:
    """Semi-bandit FTPL with geometric resampling.

    Each round plays ``a = pi(x_t)`` for ``pi = M({z} + proxy history)``.
    For every ``j`` in ``a`` (ascending) it redraws fresh noise and re-queries
    the oracle until the answer contains ``j`` at ``x_t``, at most ``L`` times;
    ``J(j)`` is the attempt count (``L`` if never). The proxy loss
    ``J(j) * l(j)`` on played coordinates, zero elsewhere, is fed back as if
    fully observed. ``E[proxy(j)] = (1 - (1 - q(j))^L) l(j)``.
    """

    def __init__(self, oracle: Oracle, noise_contexts: Sequence[int], cfg: SemiBanditConfig):
        self.cfg = cfg
        self.state = FtplState(oracle, noise_contexts, cfg.epsilon)

    def round(self, x_t: int, true_loss, stream: SeedStream) -> SemiBanditRound:
        state = self.state
        if not state.all_linear:
            raise DomainError("semi-bandit learner keeps a linear history only")
        calls_before = state.oracle_calls
        policy = state.choose(x_t, stream)
        played = policy.action(x_t)
        proxy = np.zeros(state.K)
        counts: dict[int, int] = {}
        for j in np.flatnonzero(played):
            j = int(j)
            value = float(true_loss[j])  # only observed coordinates are read
            if not value >= 0.0:
                raise DomainError(f"semi-bandit losses must be non-negative, got l({j})={value}")
            rng = stream.child(Purpose.RESAMPLE, j).generator()
            J = self.cfg.L
            for attempt in range(1, self.cfg.L + 1):
                if state.leader(state.draw(rng)).action(x_t)[j] == 1:
                    J = attempt
                    break
            counts[j] = J
            proxy[j] = J * value
        term = linear_term(x_t, proxy)
        state.update(term)
        return SemiBanditRound(policy, played, term, counts, state.oracle_calls - calls_before)


def semibandit_round(learner: SemiBanditFTPL, x_t: int, true_loss, stream: SeedStream) -> SemiBanditRound:
    return learner.round(x_t, true_loss, stream)


def default_L(K: int, T: int, separator: bool = False) -> int:
    """Resampling cap: ``ceil(sqrt(K T))`` transductive, ``ceil(T^(1/3))`` with a separator."""
    if separator:
        return max(1, math.ceil(T ** (1.0 / 3.0) - 1e-12))
    return max(1, math.ceil(math.sqrt(K * T)))
