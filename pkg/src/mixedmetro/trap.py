"""Trap geometry, thermal position sampling and loss statistics.

Lengths are micrometres, times seconds, the two-body constant cm^3/s.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .units import KB, um_to_cm


@dataclass(frozen=True)
class TrapGeometry:
    """Gaussian position widths (um) of one trap and its centre offset (um)."""

    widths: tuple = (1.73, 1.58, 0.19)
    center: tuple = (0.0, 0.0, 0.0)
    temperature_uk: float = 100.0
    depth_mk: float = 1.0
    waists_um: tuple = ()

    def __post_init__(self):
        if len(self.widths) != 3 or min(self.widths) <= 0:
            raise ValueError("three positive widths are required")
        if len(self.center) != 3 or not np.all(np.isfinite(self.center)):
            raise ValueError("trap centre must be a finite 3-vector")


# Register ensemble trap and the tight control trap; the control sits 2 um
# from the register centre along z.
REGISTER_TRAP = TrapGeometry((1.73, 1.58, 0.19), (0.0, 0.0, 0.0), 100.0, 1.0, (10.0, 1.2))
CONTROL_TRAP = TrapGeometry((0.08, 0.08, 0.30), (0.0, 0.0, 2.0), 100.0, 1.0, (1.0,))


@dataclass(frozen=True)
class LossModel:
    beta_cm3_s: float = 0.25e-12
    tau_sp_s: float = 3.3
    vacuum_lifetime_s: float = 60.0
    two_body: bool = True
    single_body: bool = True

    def __post_init__(self):
        if min(self.beta_cm3_s, self.tau_sp_s, self.vacuum_lifetime_s) < 0:
            raise ValueError("loss constants must be non-negative")

    @property
    def single_atom_rate(self):
        """Combined Raman plus vacuum loss rate per atom (1/s)."""
        if not self.single_body:
            return 0.0
        r = 0.0
        for tau in (self.tau_sp_s, self.vacuum_lifetime_s):
            if tau > 0:
                r += 1.0 / tau
        return r


def sample_positions(g: TrapGeometry, n, rng):
    """``n`` positions (um), shape ``(n, 3)``, from the trap's Gaussian."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return np.asarray(g.center) + rng.normal(size=(n, 3)) * np.asarray(g.widths)


def _volume_cm3(g):
    sx, sy, sz = (um_to_cm(s) for s in g.widths)
    return sx * sy * sz


def two_body_loss_rate(n_r, g: TrapGeometry = REGISTER_TRAP, m: LossModel = LossModel()):
    """Positive two-body loss rate ``beta N (N - 1) / (8 pi^1.5 sx sy sz)`` in 1/s."""
    if n_r < 0:
        raise ValueError("N_R must be non-negative")
    if not m.two_body:
        return 0.0
    return m.beta_cm3_s * n_r * (n_r - 1) / (8 * math.pi**1.5 * _volume_cm3(g))


def no_loss_probability(n_r, t, gamma2):
    """``exp(-N t gamma2)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return math.exp(-n_r * t * gamma2)


def survival_probability(n_r, t, g=REGISTER_TRAP, m=LossModel()):
    """Probability that no register atom is lost during ``t``.

    Two-body loss plus the per-atom Raman/vacuum channel.
    """
    rate = two_body_loss_rate(n_r, g, m) + m.single_atom_rate
    return no_loss_probability(n_r, t, rate)


def peak_density(n_r, g: TrapGeometry = REGISTER_TRAP):
    """Peak density ``N / ((2 pi)^1.5 sx sy sz)`` in atoms/cm^3."""
    if n_r < 0:
        raise ValueError("N_R must be non-negative")
    return n_r / ((2 * math.pi) ** 1.5 * _volume_cm3(g))


def poisson_load(mean, rng):
    if mean < 0:
        raise ValueError("mean must be non-negative")
    return int(rng.poisson(mean))


@dataclass(frozen=True)
class WidthEstimate:
    radial_um: float
    axial_um: float
    approximate: bool = field(default=True)


def harmonic_width_estimate(waist_um, depth_mk, temperature_uk, wavelength_um):
    """Thermal widths in the harmonic approximation of a Gaussian beam trap.

    Radial ``(w0 / 2) sqrt(kT / U0)``; axial uses the Rayleigh range
    ``z_R = pi w0^2 / lambda`` as ``(z_R / sqrt(2)) sqrt(kT / U0)``. Only an
    estimate: configured widths take precedence.
    """
    if min(waist_um, depth_mk, wavelength_um) <= 0 or temperature_uk < 0:
        raise ValueError("inputs must be positive")
    ratio = math.sqrt((KB * temperature_uk * 1e-6) / (KB * depth_mk * 1e-3))
    z_r = math.pi * waist_um**2 / wavelength_um
    return WidthEstimate(0.5 * waist_um * ratio, z_r / math.sqrt(2) * ratio)
