"""Single-register-atom gate characterisation.

Two jobs live here: calibrating the Raman amplitude so that the
blockade-lifted pulse is a population pi flip, and reducing a simulated
conditional gate to the form ``a X + b Y + c Z`` on the register qubit.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .lindblad import (
    BLOCKS,
    G0,
    G1,
    AtomLevelScheme,
    GateFitError,
    controlled_gate,
    integrate,
    sigma,
)
from .rydberg import PulseParams

FIT_RESIDUAL_MAX = 0.05


def transfer_probability(pulses, scheme=None, *, n_steps=None):
    """Population moved ``|0> -> |1>`` by one pulse on a lone atom."""
    scheme = scheme or AtomLevelScheme(pulses.delta_e)
    rho = integrate(sigma(G0, G0), scheme, pulses, n_steps=n_steps, check=False)
    return float(rho[G1, G1].real)


@dataclass(frozen=True)
class Calibration:
    amplitude_scale: float
    blocked_transfer: float  # with Omega_3 = 0 (blockade lifts EIT)
    eit_transfer: float  # Omega_3 on, no interaction


def calibrate_amplitude_scale(pulses=None, *, grid=np.linspace(1.0, 4.0, 61), n_steps=None):
    """Find the smallest amplitude scale maximising the blockade-lifted transfer.

    The lifted case is emulated with ``Omega_3 = 0``. A coarse grid locates the
    first transfer maximum and a bounded scalar search refines it.
    """
    pulses = pulses or PulseParams()
    lifted = replace(pulses, omega3_factor=0.0)

    def transfer(s):
        return transfer_probability(replace(lifted, amplitude_scale=s), n_steps=n_steps)

    vals = np.array([transfer(s) for s in grid])
    i = int(np.argmax(vals > 0.9)) if np.any(vals > 0.9) else int(np.argmax(vals))
    while i + 1 < len(vals) and vals[i + 1] > vals[i]:
        i += 1
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda s: -transfer(s), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-7})
    scale = float(res.x)
    tuned = replace(pulses, amplitude_scale=scale)
    return Calibration(scale, -float(res.fun), transfer_probability(tuned, n_steps=n_steps))


# ------------------------------------------------------------------ gate fit


@dataclass(frozen=True)
class GateRecord:
    """Conditional register map written as ``a X + b Y + c Z`` (complex a, b, c).

    ``theta`` follows ``a - i b = |a - i b| exp(-i theta)``. ``weight`` is the
    share of the dominant Kraus operator in the two-branch channel and
    ``residual`` the distance of that operator from the fitted form.
    """

    a: complex
    b: complex
    c: complex
    theta: float
    residual: float
    weight: float
    frame_phase: float

    @property
    def flip_amplitude(self):
        return abs(self.a - 1j * self.b)

    @property
    def is_flip(self):
        return self.flip_amplitude**2 > 0.5

    def as_matrix(self):
        sx = np.array([[0, 1], [1, 0]], complex)
        sy = np.array([[0, -1j], [1j, 0]])
        sz = np.diag([1.0 + 0j, -1.0])
        return self.a * sx + self.b * sy + self.c * sz


def two_branch_choi(scheme, pulses, control_shift, *, n_steps=None):
    """Choi matrix of the gate on (control in {0, x}) x (register qubit).

    Index order of the 4-dim space is ``(control, register)`` with control
    ``0 -> 0`` and ``x -> 1``. ``control_shift`` may be an array of shifts,
    giving a leading batch axis.
    """
    vc = np.atleast_1d(np.asarray(control_shift, float))
    batch = vc.shape
    basis = np.zeros((4, 4, 4), complex)  # |i><j| of the register qubit, 4-level embedded
    for i in range(2):
        for j in range(2):
            basis[2 * i + j, i, j] = 1.0
    blocks = {k: np.broadcast_to(basis, batch + basis.shape) for k in BLOCKS}
    out = controlled_gate(
        blocks, scheme, pulses, np.zeros(batch + (1, 1)), vc[..., None], n_steps=n_steps
    )
    choi = np.zeros(batch + (4, 4, 4, 4), complex)  # [out, in, out', in']
    q = slice(0, 2)
    sel = {"00": (0, 0), "xx": (1, 1), "0x": (0, 1)}
    for key, (ca, cb) in sel.items():
        for i in range(2):
            for j in range(2):
                m = out[key][..., 2 * i + j, q, q]
                _choi_set(choi, ca, cb, i, j, m)
                if key == "0x":
                    _choi_set(choi, cb, ca, j, i, np.conj(np.swapaxes(m, -1, -2)))
    return choi.reshape(batch + (16, 16)) if np.ndim(control_shift) else choi.reshape(16, 16)


def _choi_set(choi, ca, cb, i, j, m):
    # Entry [(out, in), (out', in')] = <out| E(|in><in'|) |out'>; control is frozen.
    for r in range(2):
        for rp in range(2):
            choi[..., 2 * ca + r, 2 * ca + i, 2 * cb + rp, 2 * cb + j] = m[..., r, rp]


def dominant_kraus(choi):
    """Dominant Kraus operator (4x4) and its weight from a Choi matrix.

    ``choi`` has shape ``(..., 16, 16)`` indexed by ``(out, in)`` pairs.
    """
    mat = 0.5 * (choi + np.swapaxes(choi.conj(), -1, -2))
    w, v = np.linalg.eigh(mat)
    k = v[..., :, -1] * np.sqrt(np.maximum(w[..., -1], 0.0))[..., None]
    kraus = k.reshape(choi.shape[:-2] + (4, 4))
    total = np.trace(mat, axis1=-2, axis2=-1).real
    return kraus, w[..., -1] / total


def fit_conditional_map(kraus):
    """Reduce a 4x4 block-diagonal Kraus operator to a :class:`GateRecord`.

    The register map relative to the control-``0`` branch, ``K0^dag Kx``, is
    matched to ``a X + b Y + c Z`` after a register frame phase
    ``diag(1, e^{i chi})`` that removes the identity component as far as
    possible.
    """
    k0, kx = kraus[:2, :2], kraus[2:, 2:]
    rel = k0.conj().T @ kx
    nrm = np.linalg.norm(rel)
    if nrm == 0:
        raise GateFitError("conditional branch carries no amplitude")
    rel = rel * (np.sqrt(2.0) / nrm)
    k00, k11 = rel[0, 0], rel[1, 1]
    chi = float(np.angle(-k00) - np.angle(k11)) if abs(k00) * abs(k11) > 1e-12 else 0.0
    kp = rel @ np.diag([1.0, np.exp(1j * chi)])
    alpha = 0.5 * (kp[0, 0] + kp[1, 1])
    c = 0.5 * (kp[0, 0] - kp[1, 1])
    a = 0.5 * (kp[0, 1] + kp[1, 0])
    b = 0.5j * (kp[0, 1] - kp[1, 0])
    norm = np.sqrt(abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2)
    residual = float(abs(alpha))  # rel has unit Pauli-coefficient norm
    a, b, c = a / norm, b / norm, c / norm
    theta = float(-np.angle(a - 1j * b))
    return a, b, c, theta, residual, chi


def extract_gate_unitary(scheme, pulses, control_shift, *, n_steps=None, strict=True):
    """Characterise the conditional gate for one register atom.

    ``control_shift`` is the control-register pair shift in rad/us. With
    ``strict`` a :class:`GateFitError` is raised when the fit residual (plus
    the non-dominant Kraus weight) exceeds 0.05 or the map is not a flip.
    """
    choi = two_branch_choi(scheme, pulses, control_shift, n_steps=n_steps)
    kraus, weight = dominant_kraus(choi)
    a, b, c, theta, resid, chi = fit_conditional_map(kraus)
    rec = GateRecord(complex(a), complex(b), complex(c), theta, resid, float(weight), chi)
    if strict:
        if not rec.is_flip:
            raise GateFitError(f"no conditional flip: |a - ib| = {rec.flip_amplitude:.3f}")
        bad = rec.residual + (1.0 - rec.weight)
        if bad > FIT_RESIDUAL_MAX:
            raise GateFitError(f"non-unitary conditional map: defect {bad:.3f}")
    return rec


def gate_records(scheme, pulses, control_shifts, *, n_steps=None):
    """Non-strict records for an array of control shifts (one batched run)."""
    choi = two_branch_choi(scheme, pulses, np.asarray(control_shifts, float), n_steps=n_steps)
    kraus, weight = dominant_kraus(choi)
    out = []
    for kk, w in zip(kraus, weight):
        a, b, c, theta, resid, chi = fit_conditional_map(kk)
        out.append(GateRecord(complex(a), complex(b), complex(c), theta, resid, float(w), chi))
    return out
