"""Laplace fake-sample perturbations with reproducible, path-addressed seeding."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DomainError, LossTerm, linear_term


class Purpose(enum.IntEnum):
    PLAY = 0
    RESAMPLE = 1
    ADVERSARY = 2
    TASK = 3
    PREDICTOR = 4
    BASELINE = 5
    CHECK = 6


@dataclass(frozen=True)
class SeedStream:
    """A node in a tree of random streams.

    The stream at ``path`` is ``SeedSequence(master_seed, spawn_key=path)``;
    the conventional path is ``(replicate, round, purpose, resample_index)``.
    Identical ``(master_seed, path)`` always yields identical draws.
    """

    master_seed: int
    path: tuple[int, ...] = ()

    def child(self, *keys: int) -> SeedStream:
        return SeedStream(self.master_seed, self.path + tuple(int(k) for k in keys))

    def at(self, replicate: int, round_: int, purpose: Purpose, index: int = 0) -> SeedStream:
        return self.child(replicate, round_, int(purpose), index)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed & (2**64 - 1), spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class LaplaceSpec:
    """Laplace(epsilon): density ``(eps/2) exp(-eps |q|)``, mean 0, variance ``2/eps^2``."""

    epsilon: float

    def __post_init__(self) -> None:
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise DomainError(f"epsilon must be positive and finite, got {self.epsilon}")

    @property
    def variance(self) -> float:
        return 2.0 / self.epsilon**2


def laplace_quantile(spec: LaplaceSpec, u: float | np.ndarray) -> float | np.ndarray:
    """Inverse CDF: ``-(1/eps) sign(u - 1/2) ln(1 - 2|u - 1/2|)`` for ``u`` in (0, 1)."""
    arr = np.asarray(u, dtype=np.float64)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError("laplace_quantile needs 0 < u < 1")
    c = arr - 0.5
    unit = -np.sign(c) * np.log1p(-2.0 * np.abs(c))
    out = unit / spec.epsilon
    return float(out) if out.ndim == 0 else out


def open_uniform(rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
    """Uniform draws on the open interval (0, 1) at 53-bit resolution."""
    return (rng.integers(0, 2**53, size=size, dtype=np.int64) + 0.5) * 2.0**-53


def laplace_draws(spec: LaplaceSpec, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
    return laplace_quantile(spec, open_uniform(rng, size))


@dataclass(frozen=True, eq=False)
class FakeSampleSet:
    """One Laplace loss vector per noise context; ``losses[i]`` belongs to ``contexts[i]``."""

    contexts: tuple[int, ...]
    losses: np.ndarray

    def terms(self) -> list[LossTerm]:
        return [linear_term(x, row) for x, row in zip(self.contexts, self.losses)]

    def statistic(self, d: int) -> np.ndarray:
        phi = np.zeros((d, self.losses.shape[1]))
        np.add.at(phi, list(self.contexts), self.losses)
        return phi


def draw_fake_samples(
    contexts: Sequence[int], K: int, spec: LaplaceSpec, stream: SeedStream | np.random.Generator
) -> FakeSampleSet:
    """Draw ``len(contexts) * K`` i.i.d. Laplace(epsilon) coordinates."""
    if len(contexts) < 1 or K < 1:
        raise DomainError("need at least one noise context and K >= 1")
    rng = stream.generator() if isinstance(stream, SeedStream) else stream
    losses = laplace_draws(spec, rng, (len(contexts), K))
    losses.setflags(write=False)
    return FakeSampleSet(tuple(int(x) for x in contexts), losses)
