import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedmetro import analytic, estimation as es
from mixedmetro import experiment as ex

T = 375e-6
W0 = 2 * math.pi * 5326


@given(st.floats(0.2, 1.0), st.floats(-3.0, 3.0), st.floats(-0.1, 0.1))
@settings(max_examples=30, deadline=None)
def test_cosine_fit_recovers_parameters(c, phi, b):
    omega = W0 * (1 + np.linspace(-0.25, 0.25, 21))
    y = c * np.cos(2 * omega * T + phi) + b
    fit = es.fit_arrays(omega, y, T, "cosine", n_eff=2)
    assert fit.contrast == pytest.approx(c, abs=1e-8)
    assert math.cos(fit.phase_offset - phi) == pytest.approx(1.0, abs=1e-8)
    assert fit.baseline == pytest.approx(b, abs=1e-8)
    assert fit.residual < 1e-8


def test_poisson_envelope_fit_on_closed_form():
    omega = W0 * (1 + np.linspace(-1.5e-2, 1.5e-2, 41))
    y = analytic.poisson_sigma_z(25, omega * T, 0.8, 0.95)
    fit = es.fit_arrays(omega, y, T, "poisson-envelope", n_eff=25, p_r=0.95, baseline=False)
    assert fit.contrast == pytest.approx(0.8, abs=1e-8)
    assert abs(fit.phase_offset) < 1e-8


def test_pure_noise_is_usually_flagged_uncertain():
    # |C| / stderr is Rayleigh distributed for pure noise: P(< 2) = 1 - e^-2.
    rng = np.random.default_rng(0)
    omega = W0 * (1 + np.linspace(-0.25, 0.25, 21))
    flags = [es.fit_arrays(omega, rng.normal(0, 1.0, 21), T).uncertain for _ in range(200)]
    assert 0.75 < np.mean(flags) < 0.95


def test_too_few_points():
    with pytest.raises(es.FitError):
        es.fit_arrays(np.arange(3.0), np.zeros(3), T)


def test_numerical_fisher_matches_closed_form():
    model = es.FringeModel("poisson-envelope", 0.95, 0.0, T, 25, 0.95)
    for w in (W0 * 0.9, W0 * 1.01):
        exact = analytic.poisson_control_fisher(25, w * T, T, 0.95, 0.95)
        assert es.numerical_fisher(model, w) == pytest.approx(exact, rel=1e-9)
        assert es.numerical_fisher(model.value, w) == pytest.approx(exact, rel=1e-5)


def test_stationary_point_warns():
    model = es.FringeModel("cosine", 0.5, 0.0, T, 1)
    with pytest.warns(RuntimeWarning):
        assert es.numerical_fisher(model, 0.0) == 0.0


def test_operating_point_reaches_best_fisher():
    model = es.FringeModel("poisson-envelope", 1.0, 0.0, T, 25, 0.5)
    op = es.operating_point(model, W0)
    best, _ = analytic.best_control_fisher(25, 1.0, 0.5)
    assert op.fisher / T**2 == pytest.approx(best, rel=1e-3)


def test_flat_fringe_has_no_operating_point():
    model = es.FringeModel("cosine", 0.0, 0.0, T, 1)
    with pytest.raises(es.NoInformativePoint):
        es.operating_point(model, W0)


def test_sensitivity_report():
    rep = es.sensitivity_report(25 * T**2, 2 * math.pi / T * 2, T, 25)
    assert rep.S_C == pytest.approx(1 / (4 * math.pi * 5), rel=1e-12)
    assert rep.S_C == pytest.approx(15.9e-3, rel=2e-3)
    assert rep.ratio == pytest.approx(1.0)
    zero = es.sensitivity_report(0.0, W0, T, 25)
    assert zero.S_Q == math.inf
    with pytest.raises(ValueError):
        es.sensitivity_report(-1.0, W0, T, 25)


def test_dataset_pipeline_on_infinite_limit():
    cfg = ex.ExperimentConfig(mode="large_n_model", mean_n_r=25, ninf=True,
                              scan=tuple(np.linspace(-1.5e-2, 1.5e-2, 41)))
    cfg = cfg.replace(large_n=ex.LargeNConfig(losses=False))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit, op, rep = es.dataset_sensitivity(ex.run_large_n(cfg, ex.GateContrastModel()))
    assert fit.residual < 1e-10
    assert fit.contrast == pytest.approx(0.95)
    assert rep.S_C == pytest.approx(1 / (cfg.omega0 * cfg.t * 5))
    assert 1.0 < rep.ratio < 6.0


def test_contrast_decays_monotonically_with_linewidth():
    widths = (10e3, 30e3, 100e3)
    contrasts = []
    for lw in widths:
        cfg = ex.ExperimentConfig(mean_n_r=1, nu=49, seed=1, scan=tuple(np.linspace(-0.25, 0.25, 9)))
        cfg = replace(cfg, gate=replace(cfg.gate, linewidth_hz=lw))
        contrasts.append(es.fit_fringe(ex.run_full_protocol(cfg), "cosine", column="sigma_z_expect").contrast)
    c0, k, monotone = es.fit_linewidth_decay(widths, contrasts)
    assert monotone and k > 0 and 0 < c0 <= 1
    # The quoted law rises with linewidth; only its sign is compared here.
    quoted = [np.exp(-es.QUOTED_CONTRAST_LAW_KHZ / (lw / 1e3)) for lw in widths]
    assert np.all(np.diff(quoted) > 0)


def test_fit_linewidth_decay_recovers_rate():
    g = np.array([10e3, 30e3, 100e3])
    c0, k, monotone = es.fit_linewidth_decay(g, 0.93 * np.exp(-0.002 * g / 1e3))
    assert (c0, k, monotone) == (pytest.approx(0.93), pytest.approx(0.002), True)
    with pytest.raises(ValueError):
        es.fit_linewidth_decay([1e4], [0.9])
