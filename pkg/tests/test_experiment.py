import math
from dataclasses import replace

import numpy as np
import pytest

from mixedmetro import analytic, experiment as ex

SCAN = tuple(np.linspace(-0.25, 0.25, 9))


def ideal_config(n_r, **kw):
    # Omega_3 raised so the EIT dark state is followed adiabatically.
    gate = ex.GateConfig(omega3_factor=30.0, gamma_e_hz=0.0, linewidth_hz=0.0, blockade_limit=True)
    inter = ex.InteractionConfig(register_interactions=False)
    return ex.ExperimentConfig(mean_n_r=n_r, nu=2, ninf=True, noise=analytic.NoiseParams(1.0, 1.0),
                               scan=SCAN, gate=gate, interaction=inter, **kw)


@pytest.mark.parametrize("n_r", [1, 2])
def test_ideal_gates_reproduce_analytic_fringe(n_r):
    cfg = ideal_config(n_r)
    ds = ex.run_full_protocol(cfg)
    ref = analytic.control_sigma_z(n_r, 1.0, 1.0, ds.omega * cfg.t)
    assert np.max(np.abs(ds.column("sigma_z_mean") - ref)) < 1e-3


def test_ideal_gates_with_mixed_states():
    cfg = replace(ideal_config(2), noise=analytic.NoiseParams(0.8, 0.6))
    ds = ex.run_full_protocol(cfg)
    ref = analytic.control_sigma_z(2, 0.8, 0.6, ds.omega * cfg.t)
    assert np.max(np.abs(ds.column("sigma_z_mean") - ref)) < 1e-3


def small_config(**kw):
    return ex.ExperimentConfig(mean_n_r=1, nu=7, scan=SCAN, seed=3, **kw)


def test_determinism_and_tally_conservation():
    a = ex.run_full_protocol(small_config())
    b = ex.run_full_protocol(small_config())
    assert a.rows() == b.rows()
    for p in a.points:
        assert p.n0 + p.n1 + p.losses == 7
        assert -1 <= p.sigma_z_mean <= 1
    c = ex.run_full_protocol(small_config().replace(seed=4))
    assert a.rows() != c.rows()


def test_linewidth_lowers_expectation_contrast():
    lo = ex.run_full_protocol(small_config())
    cfg = small_config()
    hi = ex.run_full_protocol(replace(cfg, gate=replace(cfg.gate, linewidth_hz=100e3)))
    assert np.max(np.abs(hi.column("sigma_z_expect"))) < np.max(np.abs(lo.column("sigma_z_expect")))


def test_protocol_coefficients_are_a_valid_fringe():
    cfg = small_config()
    streams = ex._streams(0, 4)
    s1, s2 = ex._draw_shifts(cfg, 2, streams)
    coeffs = ex.protocol_coefficients(replace(cfg, mean_n_r=2), s1, s2)
    sz, leak = coeffs.sigma_z(np.linspace(0, 2 * np.pi, 50))
    assert np.all(np.abs(sz) <= 1 + 1e-9)
    assert np.all(leak > -1e-9) and np.all(leak < 0.05)


def test_validation():
    with pytest.raises(ValueError):
        ex.ExperimentConfig(mean_n_r=5)
    with pytest.raises(ValueError):
        ex.ExperimentConfig(mode="other")
    with pytest.raises(ValueError):
        ex.ExperimentConfig(scan=())
    with pytest.raises(ValueError):
        ex.run_large_n(ex.ExperimentConfig())


def large_config(**kw):
    return ex.ExperimentConfig(mode="large_n_model", mean_n_r=25, scan=tuple(np.linspace(-1.5e-2, 1.5e-2, 21)), **kw)


def test_large_n_infinite_limit_matches_poisson_closed_form():
    cfg = large_config(ninf=True)
    cfg = replace(cfg, large_n=replace(cfg.large_n, losses=False))
    ds = ex.run_large_n(cfg, ex.GateContrastModel())
    ref = analytic.poisson_sigma_z(25, ds.omega * cfg.t, 0.95, 0.95)
    assert np.max(np.abs(ds.column("sigma_z_mean") - ref)) < 1e-12


def test_large_n_loss_fraction():
    ds = ex.run_large_n(large_config(ninf=True), ex.GateContrastModel())
    frac = ds.points[0].losses / ds.config.nu
    assert frac == pytest.approx(0.06, abs=0.01)


def test_large_n_sampled_tallies():
    ds = ex.run_large_n(large_config(seed=2), ex.GateContrastModel())
    for p in ds.points:
        assert p.n0 + p.n1 + p.losses == ds.config.nu
    assert ds.rows() == ex.run_large_n(large_config(seed=2), ex.GateContrastModel()).rows()


def test_sampled_fringe_tracks_expectation():
    cfg = large_config(nu=4000, seed=5)
    cfg = replace(cfg, large_n=replace(cfg.large_n, losses=False))
    ds = ex.run_large_n(cfg, ex.GateContrastModel())
    assert np.max(np.abs(ds.column("sigma_z_mean") - ds.column("sigma_z_expect"))) < 5 / math.sqrt(4000)


def test_gate_model_contrast_and_phase():
    perfect = ex.GateContrastModel()
    assert perfect.contrast(25, 0.95) == pytest.approx(0.95)
    curve = ex.GateContrastModel("curve", 0.9, 0.01)
    assert curve.contrast(10, 0.95) == pytest.approx(0.9 * math.exp(-0.1))
    rec = ex.GateContrastModel("records", thetas=(0.1, 0.1))
    assert rec.phase_factor(3) == pytest.approx(np.exp(0.3j))


def test_perfect_per_atom_gates_give_control_purity():
    cfg = ideal_config(1).replace(noise=analytic.NoiseParams(0.95, 0.95), nu=3)
    sz = ex.per_atom_sigma_z(cfg, [1, 2, 3])
    expected = 0.95 * np.cos(np.array([1, 2, 3]) * math.pi)
    assert np.allclose(sz.mean(axis=1), expected, atol=2e-3)


def test_gate_contrast_curve_fit_failure_reports_points():
    err = ex.FitFailure("boom", [1, 2], [0.9, 0.8])
    assert "raw points" in str(err)


def test_gravity():
    assert ex.gravity_omega(0.0) == 0.0
    assert ex.gravity_omega(1.0) == pytest.approx(2 * math.pi * 2145, rel=5e-3)
    assert ex.GRAVITY_PRESETS["quoted_2p5um"] == pytest.approx(2 * math.pi * 5326)
    assert ex.GRAVITY_PRESETS["linear_2p5um"] == pytest.approx(2 * math.pi * 5363)
    with pytest.raises(ValueError):
        ex.gravity_omega(-1.0)


def test_control_distance_quantile():
    cfg = ex.ExperimentConfig()
    assert 4.0 < ex.control_distance_quantile(cfg, 0.95, 50_000) < 5.0
