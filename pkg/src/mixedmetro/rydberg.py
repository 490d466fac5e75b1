"""Rydberg pair interaction and gate pulse shapes.

Pair shifts use the single-channel (strongest pair) Forster model, in MHz
with distances in micrometres. Pulse quantities are in engine units
(rad/us, us).
"""

from dataclasses import dataclass

import numpy as np

from .units import mhz_to_rad_per_us

R_FLOOR_UM = 0.05
# Quoted blockade radii; they disagree with r_max() on the quoted constants.
QUOTED_R_MAX_UM = {"control-register": 8.1, "register-register": 5.7}


@dataclass(frozen=True)
class InteractionParams:
    """Dipole-dipole coefficient ``c_dd`` (MHz um^3) and Forster defect
    ``delta_def`` (MHz, signed) for one class of atom pairs."""

    c_dd: float
    delta_def: float
    pair_class: str = "control-register"

    def __post_init__(self):
        if not self.c_dd > 0:
            raise ValueError(f"c_dd must be positive, got {self.c_dd}")
        if self.delta_def == 0:
            raise ValueError("delta_def must be non-zero")


# n=74 control / n'=73 register pair and the register-register pair.
CONTROL_REGISTER = InteractionParams(2.92e4, -196.0, "control-register")
REGISTER_REGISTER = InteractionParams(2.84e4, -613.0, "register-register")


def pair_shift(r, p):
    """Energy shift (MHz) of the doubly excited pair state at distance ``r`` (um).

    Accepts scalars or arrays. Raises ``ValueError`` below the 0.05 um floor.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < R_FLOOR_UM):
        raise ValueError(f"pair distance below {R_FLOOR_UM} um: {r.min():.4g}")
    d = p.delta_def
    v = 0.5 * (d - np.sign(d) * np.sqrt(d * d + 4.0 * p.c_dd**2 / r**6))
    return v if v.ndim else float(v)


def r_max(p):
    """Crossover distance (um) between the 1/r^3 and 1/r^6 regimes."""
    return (2.0 * p.c_dd / abs(p.delta_def)) ** (1.0 / 3.0)


def pair_shift_matrix(positions, params, control_params=None):
    """Symmetric table of pair shifts in rad/us for ``positions`` (n, 3), um.

    Atom 0 is treated as the control when ``control_params`` is given; its
    row and column use those constants, every other pair uses ``params``.
    """
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    v = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            p = control_params if (i == 0 and control_params is not None) else params
            r = np.linalg.norm(pos[i] - pos[j])
            v[i, j] = v[j, i] = mhz_to_rad_per_us(pair_shift(r, p))
    return v


@dataclass(frozen=True)
class PulseParams:
    """Gate pulse parameters: intermediate detuning ``delta_e`` (rad/us),
    gate time ``tau`` (us) and the Raman amplitude calibration factor."""

    delta_e: float = mhz_to_rad_per_us(1000.0)
    tau: float = 0.5
    amplitude_scale: float = 1.0
    omega3_factor: float = 10.0

    def __post_init__(self):
        if not (self.delta_e > 0 and self.tau > 0):
            raise ValueError("delta_e and tau must be positive")


def omega2_peak(p):
    return np.sqrt(8.0 * p.delta_e / (3.0 * p.tau)) * p.amplitude_scale


def omega2(t, p):
    """sin^2-shaped Raman amplitude (rad/us); zero outside ``[0, tau]``."""
    t = np.asarray(t, dtype=float)
    inside = (t >= 0) & (t <= p.tau)
    val = np.where(inside, omega2_peak(p) * np.sin(np.pi * t / p.tau) ** 2, 0.0)
    return val if val.ndim else float(val)


def omega3(p):
    """Constant Rydberg coupling amplitude (rad/us)."""
    return p.omega3_factor * np.sqrt(4.0 * p.delta_e / (3.0 * p.tau))


def blockade_scale(p):
    """Omega_3^2 / (4 Delta_e): the shift the interaction must exceed to lift EIT."""
    return omega3(p) ** 2 / (4.0 * p.delta_e)
