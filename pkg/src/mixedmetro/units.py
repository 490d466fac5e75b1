"""Unit conversions.

The gate engine works in microseconds and rad/us (so ``2*pi*1000`` is a
1 GHz detuning). Configuration files use Hz, seconds and micrometres. Every
conversion between the two lives here.
"""

import math

TWO_PI = 2.0 * math.pi
HBAR = 1.054571817e-34  # J s
KB = 1.380649e-23  # J / K
RB87_MASS = 1.45e-25  # kg, value used for the gravity preset
G_EARTH = 9.81  # m / s^2


def mhz_to_rad_per_us(f_mhz):
    """Cyclic frequency in MHz -> angular frequency in rad/us."""
    return TWO_PI * f_mhz


def rad_per_us_to_mhz(w):
    return w / TWO_PI


def hz_to_rad_per_s(f_hz):
    return TWO_PI * f_hz


def rate_hz_to_per_us(rate_hz):
    """A decay/dephasing rate quoted in Hz (1/s) -> 1/us, no 2*pi."""
    return rate_hz * 1e-6


def seconds_to_us(t_s):
    return t_s * 1e6


def us_to_seconds(t_us):
    return t_us * 1e-6


def um_to_cm(x_um):
    return x_um * 1e-4
