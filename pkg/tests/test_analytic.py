import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedmetro import analytic
from oracles import circuit_outcomes

prob = st.floats(0.0, 1.0)
phase = st.floats(-20.0, 20.0)


@given(st.integers(1, 4), prob, prob, phase)
@settings(max_examples=60, deadline=None)
def test_outcomes_match_circuit(n_r, p_c, p_r, phi):
    got = analytic.outcome_table(n_r, p_c, p_r, phi)
    assert np.max(np.abs(got - circuit_outcomes(n_r, p_c, p_r, phi))) < 1e-12


@given(st.integers(0, 30), prob, prob, phase)
@settings(max_examples=100, deadline=None)
def test_outcomes_normalised_and_nonnegative(n_r, p_c, p_r, phi):
    t = analytic.outcome_table(n_r, p_c, p_r, phi)
    assert t.min() >= -1e-15
    assert abs(t.sum() - 1) < 1e-12
    assert np.allclose(t.sum(axis=0), analytic.binomial_weights(n_r, p_r))


@given(st.integers(1, 12), prob, prob, phase)
@settings(max_examples=50, deadline=None)
def test_sigma_z_even_and_periodic(n_r, p_c, p_r, phi):
    s = analytic.control_sigma_z
    assert s(n_r, p_c, p_r, phi) == pytest.approx(s(n_r, p_c, p_r, -phi), abs=1e-12)
    assert s(n_r, p_c, p_r, phi) == pytest.approx(s(n_r, p_c, p_r, phi + 2 * math.pi), abs=1e-9)


def test_control_marginals_sum_to_sigma_z():
    cfg = analytic.ProtocolConfig(5, 2 * math.pi * 5326, 100e-6)
    noise = analytic.NoiseParams(0.9, 0.7)
    p0, p1 = analytic.control_marginals(cfg, noise)
    assert p0 + p1 == pytest.approx(1.0)
    assert p0 - p1 == pytest.approx(analytic.control_sigma_z(5, 0.9, 0.7, cfg.phase))


@pytest.mark.parametrize("n_r", range(1, 11))
@pytest.mark.parametrize("p_r", [0.0, 0.3, 0.7, 0.95, 1.0])
def test_full_fisher_closed_form(n_r, p_r):
    omega, t = 2 * math.pi * 5326, 375e-6 * 0.37
    f = analytic.full_fisher(n_r, 1.0, p_r, omega, t)
    assert f == pytest.approx(analytic.fisher_closed_form(n_r, p_r, t), rel=1e-8)


def test_fisher_limits_exact():
    t = 2.0
    for n in range(1, 30):
        assert analytic.fisher_closed_form(n, 1.0, t) == n * n * t * t
        assert analytic.fisher_closed_form(n, 0.0, t) == n * t * t


def test_fisher_zero_for_constant_distribution():
    f = analytic.fisher_information(lambda w: np.array([0.5, 0.5]), 3.0)
    assert f == 0.0


def test_two_outcome_fisher_undefined_at_extremes():
    assert math.isnan(analytic.two_outcome_fisher(1.0, 0.3))
    assert analytic.two_outcome_fisher(0.0, 2.0) == pytest.approx(4.0)


def test_sensitivity_infinite_for_zero_fisher():
    with pytest.warns(RuntimeWarning):
        assert analytic.sensitivity(0.0) == math.inf
    assert analytic.sensitivity(4.0, nu=4, omega=2.0) == pytest.approx(1 / (2 * 2 * 2))


def test_validation():
    with pytest.raises(ValueError):
        analytic.NoiseParams(1.2, 0.5)
    with pytest.raises(ValueError):
        analytic.ProtocolConfig(-1, 1.0, 1.0)


@pytest.mark.parametrize("mean_n", [0.5, 3.0, 25.0, 60.0])
@pytest.mark.parametrize("p_r", [0.0, 0.5, 0.95, 1.0])
def test_poisson_closed_form_matches_series(mean_n, p_r):
    phi = np.linspace(0, 4 * math.pi, 401)
    series = analytic.poisson_average(mean_n, lambda n: analytic.control_sigma_z(n, 0.9, p_r, phi))
    assert np.max(np.abs(series - analytic.poisson_sigma_z(mean_n, phi, 0.9, p_r))) < 1e-10


def test_poisson_derivative_matches_finite_difference():
    phi, h = 0.7, 1e-6
    f = lambda x: analytic.poisson_sigma_z(25, x, 0.95, 0.8)  # noqa: E731
    fd = (f(phi + h) - f(phi - h)) / (2 * h)
    assert analytic.poisson_sigma_z_derivative(25, phi, 0.95, 0.8) == pytest.approx(fd, rel=1e-6)


def test_poisson_cutoff_covers_tail():
    from scipy.stats import poisson

    for m in (0.1, 1, 25, 400):
        assert poisson.sf(analytic.poisson_cutoff(m), m) < 1e-12


def test_best_control_fisher_limit():
    f, _ = analytic.best_control_fisher(25, 1.0, 0.5)
    assert f == pytest.approx(25 + 625 * 0.25, rel=1e-3)


def test_purity_crossover_monotone_in_control_purity():
    lo = analytic.purity_crossover(25, 0.99)
    hi = analytic.purity_crossover(25, 0.97)
    assert 0 < lo < hi < 1
    assert analytic.purity_crossover(25, 1.0) == 0.0


def test_invalid_fisher_probabilities():
    with pytest.raises(analytic.DegenerateDistribution):
        analytic.fisher_information(lambda w: np.zeros(3), 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        analytic.full_fisher(3, 0.5, 0.5, 1.0, 1.0)
