"""Dense Lindblad engine for four-level atoms.

Each atom has levels ``|0>, |1>`` (hyperfine qubit), ``|e>`` (intermediate)
and ``|x>`` (Rydberg), indexed 0..3. Operators act on the tensor product of
``n_atoms`` such atoms, atom 0 being the leftmost factor. Engine units are
us and rad/us.

Two integrators are provided. ``"rk"`` is an adaptive Dormand-Prince 8(5,3)
integration of :func:`lindblad_rhs`. ``"split"`` (default) alternates exact
per-atom dissipative channels with fourth-order Magnus unitaries; it is
insensitive to the very large pair shifts that make explicit stepping stiff.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .rydberg import PulseParams, omega2, omega3

G0, G1, E, X = 0, 1, 2, 3
LEVELS = ("0", "1", "e", "x")
MAX_ATOMS = 4

PulseSchedule = PulseParams

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_TOL = -1e-7


class PhysicalityError(RuntimeError):
    """A density matrix left the physical set beyond the engine tolerances."""


class IntegrationError(RuntimeError):
    pass


class LeakageError(ValueError):
    pass


class GateFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class AtomLevelScheme:
    """Detuning of ``|e>`` and the dissipation rates (all in engine units).

    ``gamma_ryd`` is an optional Rydberg loss rate (population leaves the
    system); it is zero by default.
    """

    delta_e: float
    gamma_e: float = 0.0
    gamma_dph: float = 0.0
    gamma_ryd: float = 0.0

    def __post_init__(self):
        if not self.delta_e > 0:
            raise ValueError("delta_e must be positive")
        if min(self.gamma_e, self.gamma_dph, self.gamma_ryd) < 0:
            raise ValueError("rates must be non-negative")

    def replace(self, **kw):
        d = dict(self.__dict__)
        d.update(kw)
        return AtomLevelScheme(**d)


def ket(i, d=4):
    v = np.zeros(d, dtype=complex)
    v[i] = 1.0
    return v


def sigma(i, j):
    """Single-atom ``|i><j|``."""
    m = np.zeros((4, 4), dtype=complex)
    m[i, j] = 1.0
    return m


def embed(op, k, n_atoms):
    """``I x ... x op (at k) x ... x I``."""
    left = np.eye(4**k)
    right = np.eye(4 ** (n_atoms - k - 1))
    return np.kron(np.kron(left, op), right)


def product_state(*rhos):
    out = np.array([[1.0 + 0j]])
    for r in rhos:
        out = np.kron(out, r)
    return out


def _check_n(n_atoms):
    if n_atoms > MAX_ATOMS:
        raise ValueError(f"dense engine is capped at {MAX_ATOMS} atoms, got {n_atoms}")
    if n_atoms < 1:
        raise ValueError("need at least one atom")


def _driven_mask(n_atoms, driven):
    if driven is None:
        return [True] * n_atoms
    driven = [bool(d) for d in driven]
    if len(driven) != n_atoms:
        raise ValueError("driven mask length must equal n_atoms")
    return driven


def _validate_shifts(shifts, n_atoms):
    v = np.zeros((n_atoms, n_atoms)) if shifts is None else np.asarray(shifts, float)
    if v.shape != (n_atoms, n_atoms):
        raise ValueError(f"pair shift table must be {n_atoms}x{n_atoms}")
    if not np.allclose(v, v.T) or np.any(np.diag(v) != 0):
        raise ValueError("pair shift table must be symmetric with zero diagonal")
    return v


def hamiltonian_parts(scheme, n_atoms, pairwise_shifts, pulses, driven=None):
    """Return ``(H_static, H_drive)`` with ``H(t) = H_static + omega2(t) H_drive``."""
    _check_n(n_atoms)
    driven = _driven_mask(n_atoms, driven)
    v = _validate_shifts(pairwise_shifts, n_atoms)
    o3 = omega3(pulses)
    h_static_1 = scheme.delta_e * sigma(E, E) + 0.5 * o3 * (sigma(E, X) + sigma(X, E))
    h_bare_1 = scheme.delta_e * sigma(E, E)
    h_drive_1 = 0.5 * (sigma(G0, E) + sigma(G1, E) + sigma(E, G0) + sigma(E, G1))
    dim = 4**n_atoms
    hs = np.zeros((dim, dim), dtype=complex)
    hd = np.zeros((dim, dim), dtype=complex)
    for k in range(n_atoms):
        hs += embed(h_static_1 if driven[k] else h_bare_1, k, n_atoms)
        if driven[k]:
            hd += embed(h_drive_1, k, n_atoms)
    px = [embed(sigma(X, X), k, n_atoms).diagonal().real for k in range(n_atoms)]
    diag = np.zeros(dim)
    for i in range(n_atoms):
        for j in range(i + 1, n_atoms):
            diag += v[i, j] * px[i] * px[j]
    hs += np.diag(diag)
    return hs, hd


def build_hamiltonian(scheme, n_atoms, pairwise_shifts, t, pulses, driven=None):
    """Full Hamiltonian at time ``t`` (us). Each unordered pair contributes once."""
    hs, hd = hamiltonian_parts(scheme, n_atoms, pairwise_shifts, pulses, driven)
    return hs + omega2(t, pulses) * hd


def n_atoms_of(rho):
    dim = rho.shape[-1]
    n = int(round(np.log(dim) / np.log(4)))
    if 4**n != dim:
        raise ValueError(f"dimension {dim} is not a power of 4")
    return n


def lindblad_rhs(rho, H, scheme):
    """Right-hand side of the master equation, term by term as written.

    Decay from ``|e>`` feeds both ``|0>`` and ``|1>`` at ``gamma_e`` each,
    so ``|e>`` empties at ``2 gamma_e``. Dephasing acts on ``|1>, |e>, |x>``.
    """
    n = n_atoms_of(rho)
    out = -1j * (H @ rho - rho @ H)
    ge, gd, gr = scheme.gamma_e, scheme.gamma_dph, scheme.gamma_ryd
    for k in range(n):
        if ge:
            pe = embed(sigma(E, E), k, n)
            for i in (G0, G1):
                lo = embed(sigma(i, E), k, n)
                out += 0.5 * ge * (2 * lo @ rho @ lo.conj().T - pe @ rho - rho @ pe)
        if gd:
            for i in (G1, E, X):
                p = embed(sigma(i, i), k, n)
                out += 0.5 * gd * (2 * p @ rho @ p - p @ rho - rho @ p)
        if gr:
            p = embed(sigma(X, X), k, n)
            out -= 0.5 * gr * (p @ rho + rho @ p)
    return out


def local_dissipator(scheme):
    """16x16 single-atom dissipator acting on row-major ``vec(rho)``."""
    eye = np.eye(4)

    def sandwich(a, b):  # rho -> a rho b
        return np.kron(a, b.T)

    L = np.zeros((16, 16), dtype=complex)
    if scheme.gamma_e:
        pe = sigma(E, E)
        for i in (G0, G1):
            lo = sigma(i, E)
            L += 0.5 * scheme.gamma_e * (
                2 * sandwich(lo, lo.conj().T) - sandwich(pe, eye) - sandwich(eye, pe)
            )
    if scheme.gamma_dph:
        for i in (G1, E, X):
            p = sigma(i, i)
            L += 0.5 * scheme.gamma_dph * (2 * sandwich(p, p) - sandwich(p, eye) - sandwich(eye, p))
    if scheme.gamma_ryd:
        p = sigma(X, X)
        L -= 0.5 * scheme.gamma_ryd * (sandwich(p, eye) + sandwich(eye, p))
    return L


def local_channel(scheme, h):
    """Exact single-atom dissipative channel over time ``h``, shape (4,4,4,4)."""
    return expm(h * local_dissipator(scheme)).reshape(4, 4, 4, 4)


def apply_local_superop(rho, superop, k, n_atoms):
    """Apply a single-atom superoperator to atom ``k`` of ``rho``.

    ``rho`` may carry leading batch axes; the last two axes are the matrix.
    """
    batch = rho.shape[:-2]
    nb = len(batch)
    t = rho.reshape(batch + (4,) * (2 * n_atoms))
    ax_ket, ax_bra = nb + k, nb + n_atoms + k
    t = np.tensordot(superop, t, axes=([2, 3], [ax_ket, ax_bra]))
    t = np.moveaxis(t, [0, 1], [ax_ket, ax_bra])
    return t.reshape(rho.shape)


def magnus_unitary(h_static, h_drive, comm, a1, a2, h, blocks=None):
    """Fourth-order Magnus propagator for ``H = H_s + a(t) H_d`` over one step.

    ``a1, a2`` are the drive amplitudes at the two Gauss points and ``comm``
    is ``[H_d, H_s]``. ``h_static`` and ``comm`` may carry leading batch axes.
    ``blocks`` (from :func:`block_structure`) exponentiates each invariant
    subspace separately.
    """
    gen = h_static * h + (0.5 * h * (a1 + a2)) * h_drive
    if a2 != a1:
        gen = gen - 1j * (np.sqrt(3.0) / 12.0) * h * h * (a2 - a1) * comm
    if blocks is None:
        return _expm_herm(gen)
    u = np.zeros(gen.shape, dtype=complex)
    for idx in blocks:
        rows, cols = idx[:, :, None], idx[:, None, :]
        u[..., rows, cols] = _expm_herm(gen[..., rows, cols])
    return u


def _expm_herm(gen):
    w, v = np.linalg.eigh(gen)
    return (v * np.exp(-1j * w)[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def block_structure(*mats, rtol=1e-12):
    """Invariant subspaces shared by ``mats``, grouped by size.

    Entries below ``rtol`` times the largest are treated as zero. Returns a
    list of integer arrays ``(n_blocks, size)``; batch axes are merged into
    one sparsity pattern.
    """
    from scipy.sparse.csgraph import connected_components

    mags = [np.abs(m).reshape((-1,) + m.shape[-2:]).max(axis=0) for m in mats]
    mags = [m / m.max() for m in mags if m.max() > 0]
    pattern = sum(mags) > rtol
    n, labels = connected_components(pattern, directed=False)
    groups = {}
    for c in range(n):
        idx = np.flatnonzero(labels == c)
        groups.setdefault(len(idx), []).append(idx)
    return [np.array(v) for _, v in sorted(groups.items())]


def pm_basis(n_atoms):
    """Real orthogonal involution mapping ``|0>, |1>`` to ``|+>, |->`` on every atom.

    The Raman drive couples ``|0>`` and ``|1>`` to ``|e>`` equally, so ``|->``
    is dark and the gate Hamiltonian is block diagonal in this basis.
    """
    w1 = np.eye(4)
    w1[:2, :2] = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    w = np.ones((1, 1))
    for _ in range(n_atoms):
        w = np.kron(w, w1)
    return w


def dagger(a):
    return np.swapaxes(a.conj(), -1, -2)


_GAUSS = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)


def default_steps(pulses):
    # Delta_e * h <= pi; at 2 pi the step aliases against the intermediate detuning.
    n = int(np.ceil(pulses.tau * pulses.delta_e / np.pi))
    return max(200, -(-n // 10) * 10)


def _split_propagate(rho, parts_list, channels, pulses, t_span, n_steps, apply_block, reverse=False,
                     blocks=None):
    """Shared driver for Strang splitting.

    ``parts_list`` holds one ``(H_s, H_d, comm)`` triple per branch, and
    ``apply_block(rho, unitaries)`` applies the step unitaries to ``rho``;
    ``channels(rho, frac)`` applies the dissipative half/whole steps. With
    ``reverse`` the steps are visited last to first (for adjoint maps).
    """
    t0, t1 = t_span
    h = (t1 - t0) / n_steps
    rho = channels(rho, 0.5)
    order = range(n_steps - 1, -1, -1) if reverse else range(n_steps)
    for i, s in enumerate(order):
        ta = t0 + s * h
        a1 = omega2(ta + _GAUSS[0] * h, pulses)
        a2 = omega2(ta + _GAUSS[1] * h, pulses)
        us = [magnus_unitary(hs, hd, c, a1, a2, h, blocks) for hs, hd, c in parts_list]
        rho = apply_block(rho, us)
        rho = channels(rho, 1.0 if i < n_steps - 1 else 0.5)
    return rho


def integrate(
    rho0,
    scheme,
    pulses,
    pairwise_shifts=None,
    t_span=None,
    *,
    driven=None,
    method="split",
    n_steps=None,
    rtol=1e-8,
    atol=1e-9,
    check=True,
):
    """Evolve ``rho0`` under the gate Hamiltonian and dissipators.

    Returns the final density matrix. With ``check`` the result is validated
    against the trace, Hermiticity and positivity tolerances.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    n = n_atoms_of(rho0)
    t_span = (0.0, pulses.tau) if t_span is None else tuple(t_span)
    hs, hd = hamiltonian_parts(scheme, n, pairwise_shifts, pulses, driven)

    if method == "rk":
        dim = rho0.shape[0]

        def f(t, y):
            rho = y.view(complex).reshape(dim, dim)
            H = hs + omega2(t, pulses) * hd
            return lindblad_rhs(rho, H, scheme).ravel().view(float)

        sol = solve_ivp(
            f, t_span, rho0.ravel().view(float).copy(), method="DOP853", rtol=rtol, atol=atol
        )
        if sol.status != 0:
            raise IntegrationError(f"integration failed: {sol.message}")
        rho = sol.y[:, -1].view(complex).reshape(dim, dim)
    elif method == "split":
        n_steps = default_steps(pulses) if n_steps is None else n_steps
        step = (t_span[1] - t_span[0]) / n_steps
        cache = {}

        def channels(r, frac):
            if not (scheme.gamma_e or scheme.gamma_dph or scheme.gamma_ryd):
                return r
            if frac not in cache:
                cache[frac] = local_channel(scheme, frac * step)
            for k in range(n):
                r = apply_local_superop(r, cache[frac], k, n)
            return r

        def apply_block(r, us):
            u = us[0]
            return u @ r @ u.conj().T

        comm = hd @ hs - hs @ hd
        rho = _split_propagate(rho0, [(hs, hd, comm)], channels, pulses, t_span, n_steps, apply_block)
    else:
        raise ValueError(f"unknown method {method!r}")
    if check:
        check_physical(rho)
    return rho


def physicality(rho):
    """Return ``(trace_defect, hermiticity_defect, min_eigenvalue)``."""
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    tr = float(abs(np.trace(rho) - 1.0))
    lam = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    return tr, herm, lam


def check_physical(rho, trace=True):
    tr, herm, lam = physicality(rho)
    if herm > HERMITICITY_TOL:
        raise PhysicalityError(f"Hermiticity defect {herm:.3g}")
    if trace and tr > TRACE_TOL:
        raise PhysicalityError(f"trace defect {tr:.3g}")
    if lam < POSITIVITY_TOL:
        raise PhysicalityError(f"negative eigenvalue {lam:.3g}")
    return tr, herm, lam


# ---------------------------------------------------------------- ideal gates

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def qubit_embed(u2):
    """Embed a 2x2 qubit unitary into the 4-level space (identity on e, x)."""
    u = np.eye(4, dtype=complex)
    u[:2, :2] = u2
    return u


def control_rydberg_swap():
    """Ideal pi pulse |1> <-> |x> on the control atom."""
    u = np.eye(4, dtype=complex)
    u[[G1, X], [G1, X]] = 0.0
    u[G1, X] = u[X, G1] = 1.0
    return u


def free_evolution_phases(n_atoms, omega_t):
    """Diagonal of prod_k exp(-i omega t |1><1|_k) over atoms 1..n-1."""
    d = np.ones(1, dtype=complex)
    for k in range(n_atoms):
        one = np.ones(4, dtype=complex)
        if k > 0:
            one[G1] = np.exp(-1j * omega_t)
        d = np.kron(d, one)
    return d


def apply_perfect_unitary(rho, which, omega_t=0.0):
    """Exact conjugation by an ideal operation.

    ``which`` is ``"hadamard"`` (control), ``"rydberg_swap"`` (control
    |1> <-> |x>) or ``"free_evolution"`` (phase ``omega_t`` on |1> of every
    register atom).
    """
    n = n_atoms_of(rho)
    if which == "hadamard":
        u = embed(qubit_embed(HADAMARD), 0, n)
    elif which == "rydberg_swap":
        u = embed(control_rydberg_swap(), 0, n)
    elif which == "free_evolution":
        d = free_evolution_phases(n, omega_t)
        return d[:, None] * rho * d.conj()[None, :]
    else:
        raise ValueError(f"unknown operation {which!r}")
    return u @ rho @ u.conj().T


def qubit_projector_diag(n_atoms):
    """Diagonal of the projector onto {|0>,|1>}^n."""
    d = np.ones(1)
    for _ in range(n_atoms):
        d = np.kron(d, np.array([1.0, 1.0, 0.0, 0.0]))
    return d


@dataclass
class ReducedControl:
    rho: np.ndarray
    leakage: float

    @property
    def p0(self):
        return float(self.rho[0, 0].real)

    @property
    def p1(self):
        return float(self.rho[1, 1].real)


def partial_trace_register(rho, max_leakage=0.05):
    """Control-qubit density matrix with every atom projected on the qubit space.

    The population outside ``{|0>,|1>}^n`` is reported as ``leakage`` and
    the result is renormalised over the retained subspace.
    """
    n = n_atoms_of(rho)
    keep = qubit_projector_diag(n).astype(bool)
    sub = rho[np.ix_(keep, keep)]
    kept = float(np.trace(sub).real)
    leakage = float(np.trace(rho).real) - kept
    if leakage > max_leakage:
        raise LeakageError(f"leakage {leakage:.3g} exceeds {max_leakage}")
    t = sub.reshape(2, 2 ** (n - 1), 2, 2 ** (n - 1))
    rc = np.einsum("ajbj->ab", t)
    return ReducedControl(rc / kept, leakage)


# ------------------------------------------------------- control-blocked gate

BLOCKS = ("00", "xx", "0x")


def _register_parts(scheme, pulses, register_shifts, control_shifts):
    """Branch Hamiltonians for control in ``|0>`` and in ``|x>``.

    Shift arrays may carry leading batch axes ``(..., n, n)`` and ``(..., n)``.
    Returns the two ``(H_s, H_d, comm)`` triples with matching batch axes.
    """
    vr = np.asarray(register_shifts, dtype=float)
    vc = np.asarray(control_shifts, dtype=float)
    n = vr.shape[-1]
    if vr.shape[-2:] != (n, n) or vc.shape[-1] != n or vc.shape[:-1] != vr.shape[:-2]:
        raise ValueError("inconsistent register/control shift shapes")
    if not np.allclose(vr, np.swapaxes(vr, -1, -2)):
        raise ValueError("register shift table must be symmetric")
    _check_n(n + 1)
    hs, hd = hamiltonian_parts(scheme, n, None, pulses)
    px = np.array([embed(sigma(X, X), k, n).diagonal().real for k in range(n)])
    iu, ju = np.triu_indices(n, 1)
    pair_diag = np.einsum("...p,pd->...d", vr[..., iu, ju], px[iu] * px[ju])
    ctrl_diag = np.einsum("...k,kd->...d", vc, px)
    eye_idx = np.arange(hs.shape[0])
    hs0 = np.broadcast_to(hs, vr.shape[:-2] + hs.shape).copy()
    hs0[..., eye_idx, eye_idx] += pair_diag
    hsx = hs0.copy()
    hsx[..., eye_idx, eye_idx] += ctrl_diag
    return [(h, hd, hd @ h - h @ hd) for h in (hs0, hsx)]


def controlled_gate(
    blocks,
    scheme,
    pulses,
    register_shifts,
    control_shifts,
    *,
    n_steps=None,
    t_span=None,
    adjoint=False,
    control_factors=True,
):
    """Gate on the register with the control frozen in ``|0>`` or ``|x>``.

    During a register gate the control is not driven, so its populations in
    ``|0>`` and ``|x>`` are conserved and the joint state is
    ``sum_{c,c'} |c><c'| (x) R_cc'``. ``blocks`` maps ``"00"``, ``"xx"`` and
    ``"0x"`` to register operators; ``"x0"`` is the adjoint of ``"0x"`` and
    is not propagated. This is the same dynamics as :func:`integrate` on the
    full space with the control undriven, at a fraction of the cost.

    ``control_shifts`` are the control-register pair shifts (rad/us). Shift
    arrays may carry batch axes ``B``; block arrays then have shape
    ``B + extra + (d, d)``. With ``adjoint`` the blocks are treated as
    observables and propagated backwards by the dual map, so that
    ``tr(A_out^dag R_in) = tr(A_in^dag R_out)`` block by block.

    ``control_factors=False`` omits the control's own dephasing and Rydberg
    loss factors on the ``"0x"`` and ``"xx"`` blocks; use it when register
    atoms are propagated one at a time and the factors are applied once.
    """
    batch = np.shape(control_shifts)[:-1]
    n = np.shape(control_shifts)[-1]
    # Work in the |+>, |-> basis, where the Hamiltonian is block diagonal.
    w = pm_basis(n)
    parts = [tuple(w @ m @ w for m in p) for p in _register_parts(scheme, pulses, register_shifts, control_shifts)]
    inv = block_structure(*parts[0], *parts[1])
    t_span = (0.0, pulses.tau) if t_span is None else tuple(t_span)
    n_steps = default_steps(pulses) if n_steps is None else n_steps
    step = (t_span[1] - t_span[0]) / n_steps

    blocks = {k: w @ np.asarray(blocks[k], dtype=complex) @ w for k in BLOCKS}
    extra = blocks["00"].ndim - 2 - len(batch)
    if extra < 0 or blocks["00"].shape[: len(batch)] != batch:
        raise ValueError("block batch axes must match the shift batch axes")
    ushape = batch + (1,) * extra + (4**n, 4**n)

    dissipative = scheme.gamma_e or scheme.gamma_dph or scheme.gamma_ryd
    cache = {}

    def channels(r, frac):
        if not dissipative:
            return r
        if frac not in cache:
            h = frac * step
            sup = local_channel(scheme, h)
            w1 = pm_basis(1)
            sup = np.einsum("ai,bj,ijkl,kc,ld->abcd", w1, w1, sup, w1, w1)
            if adjoint:
                sup = sup.transpose(2, 3, 0, 1).conj()
            fxx = np.exp(-h * scheme.gamma_ryd) if control_factors else 1.0
            f0x = np.exp(-0.5 * h * (scheme.gamma_dph + scheme.gamma_ryd)) if control_factors else 1.0
            cache[frac] = (sup, fxx, f0x)
        sup, fxx, f0x = cache[frac]
        out = {}
        for key, b in r.items():
            for k in range(n):
                b = apply_local_superop(b, sup, k, n)
            out[key] = b * (fxx if key == "xx" else f0x if key == "0x" else 1.0)
        return out

    def apply_block(r, us):
        u0, ux = (u.reshape(ushape) for u in us)
        if adjoint:
            u0, ux = dagger(u0), dagger(ux)
        return {
            "00": u0 @ r["00"] @ dagger(u0),
            "xx": ux @ r["xx"] @ dagger(ux),
            "0x": u0 @ r["0x"] @ dagger(ux),
        }

    out = _split_propagate(
        blocks, parts, channels, pulses, t_span, n_steps, apply_block, reverse=adjoint, blocks=inv
    )
    return {k: w @ v @ w for k, v in out.items()}


def blocks_to_dense(blocks, control_levels=(G0, X)):
    """Assemble the full control+register matrix from the three blocks."""
    r00, rxx, r0x = blocks["00"], blocks["xx"], blocks["0x"]
    d = r00.shape[-1]
    out = np.zeros((4 * d, 4 * d), dtype=complex)
    a, b = control_levels
    out[a * d:(a + 1) * d, a * d:(a + 1) * d] = r00
    out[b * d:(b + 1) * d, b * d:(b + 1) * d] = rxx
    out[a * d:(a + 1) * d, b * d:(b + 1) * d] = r0x
    out[b * d:(b + 1) * d, a * d:(a + 1) * d] = dagger(r0x)
    return out
