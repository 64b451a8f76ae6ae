"""Acceptance criteria, one test each, at their stated tolerances.

Each test prints a PASS/FAIL line; ``conftest.py`` repeats all of them in
the terminal summary so they are visible without ``-s``.
"""

import pytest

from oracle_ftpl import checks

RESULTS: list = []


def _run(fn, *args):
    res = fn(*args)
    RESULTS.append(res)
    print(res.line())
    assert res.passed, res.line()


def test_01_oracle_exactness():
    _run(checks.check_oracle_exactness, 2016)


def test_02_be_the_leader():
    _run(checks.check_be_the_leader, 2017)


def test_03_laplace_moments():
    _run(checks.check_laplace_moments, 2018)


def test_04_error_bound():
    _run(checks.check_error_bound, 2019)


@pytest.mark.slow
def test_05_stability_bounds():
    _run(checks.check_stability, 2020)


@pytest.mark.slow
def test_06_proxy_bias():
    _run(checks.check_proxy_bias, 2021)


@pytest.mark.slow
def test_07_full_information_regret():
    _run(checks.check_full_information, 2023)


@pytest.mark.slow
def test_08_semibandit_regret():
    _run(checks.check_semibandit, 2024)


@pytest.mark.slow
def test_09_optimistic_perfect_predictor():
    _run(checks.check_optimistic, 2025)


@pytest.mark.slow
def test_10_switching_regret():
    _run(checks.check_switching, 2026)


def test_11_determinism():
    _run(checks.check_determinism, 2027)
