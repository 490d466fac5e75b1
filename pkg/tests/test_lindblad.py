import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedmetro import lindblad as lb
from mixedmetro.rydberg import PulseParams, omega2

# Reduced detuning keeps the adaptive reference integrator fast.
PULSES = PulseParams(delta_e=2 * np.pi * 40, tau=0.5, amplitude_scale=2.5, omega3_factor=3.0)
SCHEME = lb.AtomLevelScheme(PULSES.delta_e, gamma_e=0.5, gamma_dph=0.2, gamma_ryd=0.0)


def random_state(n, rng):
    d = 4**n
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = a @ a.conj().T
    return r / np.trace(r)


def assert_physical(rho):
    tr, herm, lam = lb.physicality(rho)
    assert tr <= 1e-8 and herm <= 1e-10 and lam >= -1e-7


def test_rhs_preserves_trace_and_hermiticity():
    rng = np.random.default_rng(1)
    rho = random_state(2, rng)
    H = lb.build_hamiltonian(SCHEME, 2, [[0, 30.0], [30.0, 0]], 0.2, PULSES)
    d = lb.lindblad_rhs(rho, H, SCHEME)
    assert abs(np.trace(d)) < 1e-12
    assert np.max(np.abs(d - d.conj().T)) < 1e-12


def test_local_dissipator_matches_rhs():
    rng = np.random.default_rng(2)
    rho = random_state(1, rng)
    vec = lb.local_dissipator(SCHEME) @ rho.ravel()
    ref = lb.lindblad_rhs(rho, np.zeros((4, 4)), SCHEME)
    assert np.allclose(vec.reshape(4, 4), ref, atol=1e-13)


def test_excited_state_decays_at_twice_gamma_e():
    s = lb.AtomLevelScheme(100.0, gamma_e=1.5)
    ch = lb.local_channel(s, 0.4).reshape(16, 16)
    rho = np.zeros((4, 4), complex)
    rho[lb.E, lb.E] = 1
    out = (ch @ rho.ravel()).reshape(4, 4)
    assert out[lb.E, lb.E].real == pytest.approx(np.exp(-2 * 1.5 * 0.4))
    assert out[0, 0].real == pytest.approx(out[1, 1].real)


@pytest.mark.parametrize("n", [1, 2])
def test_split_matches_adaptive_reference(n):
    rng = np.random.default_rng(3)
    rho0 = random_state(n, rng)
    v = np.zeros((n, n))
    if n == 2:
        v[0, 1] = v[1, 0] = 25.0
    a = lb.integrate(rho0, SCHEME, PULSES, v, method="split", n_steps=400)
    b = lb.integrate(rho0, SCHEME, PULSES, v, method="rk", rtol=1e-10, atol=1e-12)
    assert np.max(np.abs(a - b)) < 1e-6
    assert_physical(a)
    assert_physical(b)


def test_split_converges_second_order():
    rng = np.random.default_rng(4)
    rho0 = random_state(1, rng)
    ref = lb.integrate(rho0, SCHEME, PULSES, method="split", n_steps=3200)
    e1 = np.max(np.abs(lb.integrate(rho0, SCHEME, PULSES, method="split", n_steps=100) - ref))
    e2 = np.max(np.abs(lb.integrate(rho0, SCHEME, PULSES, method="split", n_steps=200) - ref))
    assert e2 < e1 / 3  # Strang splitting limits the overall order to two


def test_magnus_batch_equals_loop():
    rng = np.random.default_rng(5)
    hs = rng.normal(size=(3, 4, 4))
    hs = hs + np.swapaxes(hs, -1, -2)
    hd = np.diag([1.0, 2.0, 0.0, -1.0]).astype(complex)
    comm = hd @ hs - hs @ hd
    batch = lb.magnus_unitary(hs, hd, comm, 0.3, 0.7, 0.1)
    for i in range(3):
        assert np.allclose(batch[i], lb.magnus_unitary(hs[i], hd, comm[i], 0.3, 0.7, 0.1))
        assert np.allclose(batch[i] @ batch[i].conj().T, np.eye(4))


def test_controlled_gate_matches_full_space():
    """Block propagation equals the dense engine with an undriven control."""
    rng = np.random.default_rng(6)
    vr = np.array([[0.0, 40.0], [40.0, 0.0]])
    vc = np.array([150.0, 80.0])
    reg = random_state(2, rng)
    ctrl = np.zeros((4, 4), complex)
    ctrl[0, 0] = ctrl[3, 3] = 0.5
    ctrl[0, 3] = ctrl[3, 0] = 0.45
    full = np.zeros((3, 3))
    full[0, 1:] = full[1:, 0] = vc
    full[1:, 1:] = vr
    dense = lb.integrate(lb.product_state(ctrl, reg), SCHEME, PULSES, full,
                         driven=[False, True, True], n_steps=300)
    blocks = {"00": 0.5 * reg, "xx": 0.5 * reg, "0x": 0.45 * reg}
    out = lb.controlled_gate(blocks, SCHEME, PULSES, vr, vc, n_steps=300)
    assert np.max(np.abs(lb.blocks_to_dense(out) - dense)) < 1e-10
    assert_physical(lb.blocks_to_dense(out))


def test_controlled_gate_batch_and_adjoint_duality():
    rng = np.random.default_rng(7)
    vc = np.array([[120.0], [5.0], [60.0]])
    vr = np.zeros((3, 1, 1))
    rho = {k: np.broadcast_to(random_state(1, rng), (3, 4, 4)) for k in lb.BLOCKS}
    obs = {k: np.broadcast_to(random_state(1, rng), (3, 4, 4)) for k in lb.BLOCKS}
    fwd = lb.controlled_gate(rho, SCHEME, PULSES, vr, vc, n_steps=200)
    back = lb.controlled_gate(obs, SCHEME, PULSES, vr, vc, n_steps=200, adjoint=True)
    for k in lb.BLOCKS:
        lhs = np.einsum("bij,bij->b", obs[k].conj(), fwd[k])
        rhs = np.einsum("bij,bij->b", back[k].conj(), rho[k])
        assert np.allclose(lhs, rhs, atol=1e-12)
    single = lb.controlled_gate({k: v[1] for k, v in rho.items()}, SCHEME, PULSES, vr[1], vc[1], n_steps=200)
    for k in lb.BLOCKS:
        assert np.allclose(single[k], fwd[k][1], atol=1e-13)


def test_engine_caps_and_validation():
    with pytest.raises(ValueError):
        lb.hamiltonian_parts(SCHEME, 5, None, PULSES)
    with pytest.raises(ValueError):
        lb.hamiltonian_parts(SCHEME, 2, [[0, 1.0], [2.0, 0]], PULSES)
    with pytest.raises(ValueError):
        lb.AtomLevelScheme(-1.0)


def test_check_physical_flags_defects():
    rho = np.diag([0.6, 0.6, 0, 0]).astype(complex)
    with pytest.raises(lb.PhysicalityError):
        lb.check_physical(rho)
    rho = np.diag([1.1, -0.1, 0, 0]).astype(complex)
    with pytest.raises(lb.PhysicalityError):
        lb.check_physical(rho)


def test_partial_trace_leakage():
    rho = np.zeros((16, 16), complex)
    rho[0, 0] = 0.9
    rho[3, 3] = 0.1  # control |0>, register |x>
    red = lb.partial_trace_register(rho, max_leakage=0.2)
    assert red.leakage == pytest.approx(0.1)
    assert red.p0 == pytest.approx(1.0)
    with pytest.raises(lb.LeakageError):
        lb.partial_trace_register(rho, max_leakage=0.05)


@given(st.floats(-10, 10))
@settings(max_examples=20, deadline=None)
def test_free_evolution_is_unitary_phase(phi):
    rng = np.random.default_rng(8)
    rho = random_state(2, rng)
    out = lb.apply_perfect_unitary(rho, "free_evolution", phi)
    assert np.trace(out) == pytest.approx(1.0)
    assert np.allclose(np.abs(out), np.abs(rho))


def test_pulse_is_zero_outside_window():
    assert omega2(-0.1, PULSES) == 0.0
    assert omega2(0.6, PULSES) == 0.0
    assert omega2(0.25, PULSES) == pytest.approx(np.sqrt(8 * PULSES.delta_e / 1.5) * 2.5)
