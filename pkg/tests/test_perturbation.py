import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle_ftpl.core import DomainError
from oracle_ftpl.perturbation import (
    LaplaceSpec,
    Purpose,
    SeedStream,
    draw_fake_samples,
    laplace_draws,
    laplace_quantile,
    open_uniform,
)


def test_quantile_examples():
    assert laplace_quantile(LaplaceSpec(1.0), 0.5) == 0.0
    assert laplace_quantile(LaplaceSpec(1.0), 0.75) == pytest.approx(0.693147, abs=1e-6)
    assert laplace_quantile(LaplaceSpec(2.0), 0.25) == pytest.approx(-0.346574, abs=1e-6)


@pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_quantile_domain(u):
    with pytest.raises(DomainError):
        laplace_quantile(LaplaceSpec(1.0), u)


@pytest.mark.parametrize("eps", [0.0, -1.0, float("inf"), float("nan")])
def test_epsilon_must_be_positive(eps):
    with pytest.raises(DomainError):
        LaplaceSpec(eps)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-9, 1 - 1e-9), st.floats(0.05, 20.0))
def test_quantile_inverts_cdf(u, eps):
    q = laplace_quantile(LaplaceSpec(eps), u)
    cdf = 0.5 * math.exp(eps * q) if q < 0 else 1.0 - 0.5 * math.exp(-eps * q)
    assert cdf == pytest.approx(u, rel=1e-7, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 0.5), st.floats(0.05, 20.0))
def test_quantile_is_odd(u, eps):
    spec = LaplaceSpec(eps)
    assert laplace_quantile(spec, u) == pytest.approx(-laplace_quantile(spec, 1 - u), rel=1e-6)


def test_open_uniform_never_hits_endpoints():
    u = open_uniform(np.random.default_rng(0), 100_000)
    assert u.min() > 0.0 and u.max() < 1.0


def test_moments():
    x = laplace_draws(LaplaceSpec(1.0), SeedStream(7).generator(), 1_000_000)
    assert abs(x.mean()) < 0.005
    assert 1.98 <= x.var() <= 2.02


def test_variance_property():
    assert LaplaceSpec(0.5).variance == 8.0


def test_same_path_same_samples():
    s = SeedStream(3).at(1, 5, Purpose.PLAY)
    a = draw_fake_samples(range(4), 3, LaplaceSpec(1.0), s)
    b = draw_fake_samples(range(4), 3, LaplaceSpec(1.0), SeedStream(3).child(1, 5, 0, 0))
    np.testing.assert_array_equal(a.losses, b.losses)


def test_distinct_paths_differ():
    root = SeedStream(3)
    a = root.at(0, 1, Purpose.PLAY).generator().random(8)
    b = root.at(0, 1, Purpose.RESAMPLE).generator().random(8)
    c = root.at(1, 1, Purpose.PLAY).generator().random(8)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)


def test_fake_sample_shape_and_terms():
    fake = draw_fake_samples([2, 0], 3, LaplaceSpec(1.0), np.random.default_rng(1))
    assert fake.losses.shape == (2, 3)
    terms = fake.terms()
    assert [t.context for t in terms] == [2, 0]
    phi = fake.statistic(4)
    np.testing.assert_array_equal(phi[2], fake.losses[0])
    np.testing.assert_array_equal(phi[1], np.zeros(3))


def test_repeated_noise_contexts_accumulate():
    fake = draw_fake_samples([1, 1], 2, LaplaceSpec(1.0), np.random.default_rng(2))
    np.testing.assert_allclose(fake.statistic(2)[1], fake.losses.sum(axis=0))


def test_empty_noise_rejected():
    with pytest.raises(DomainError):
        draw_fake_samples([], 3, LaplaceSpec(1.0), np.random.default_rng(0))
