"""Closed-form model of the ideal mixed-state interferometer.

The control qubit is put in superposition, entangled with ``N`` register
qubits by a CNOT, the register picks up ``exp(-i omega t)`` per excited
qubit, a second CNOT and a Hadamard close the interferometer. Register
qubits start in ``diag((1 + p_R)/2, (1 - p_R)/2)`` and the control
coherence is scaled by ``p_C``.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import comb
from scipy.stats import poisson

PROB_FLOOR = 1e-15
POISSON_TAIL = 1e-12


@dataclass(frozen=True)
class NoiseParams:
    p_C: float = 1.0
    p_R: float = 1.0

    def __post_init__(self):
        for name in ("p_C", "p_R"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def register_weights(self):
        """Populations of |0> and |1> for one register qubit."""
        return (1 + self.p_R) / 2, (1 - self.p_R) / 2


@dataclass(frozen=True)
class ProtocolConfig:
    """Register size, coupling ``omega`` (rad/s), time ``t`` (s), repetitions."""

    N_R: int
    omega: float
    t: float
    nu: int = 1

    def __post_init__(self):
        if self.N_R < 0 or int(self.N_R) != self.N_R:
            raise ValueError("N_R must be a non-negative integer")
        if self.t < 0:
            raise ValueError("t must be non-negative")
        if self.nu < 1:
            raise ValueError("nu must be at least 1")

    @property
    def phase(self):
        return self.omega * self.t


@dataclass(frozen=True)
class OutcomeDistribution:
    """``probs[k, n]``: control outcome ``k``, ``n`` register qubits in |1>."""

    probs: np.ndarray

    @property
    def control_marginals(self):
        p = self.probs.sum(axis=-1)
        return float(p[0]), float(p[1])

    @property
    def register_weights(self):
        return self.probs.sum(axis=0)


def binomial_weights(n_r, p_r):
    """Probability that ``n`` of ``n_r`` register qubits start in |1>."""
    n = np.arange(n_r + 1)
    q0, q1 = (1 + p_r) / 2, (1 - p_r) / 2
    return comb(n_r, n) * q0 ** (n_r - n) * q1**n


def outcome_table(n_r, p_c, p_r, phase):
    """``P[k, n]`` as an array; ``phase`` is ``omega t``."""
    w = binomial_weights(n_r, p_r)
    m = n_r - 2 * np.arange(n_r + 1)
    fringe = p_c * np.cos(m * phase)
    return np.stack([w * (1 + fringe) / 2, w * (1 - fringe) / 2])


def outcome_probabilities(cfg: ProtocolConfig, noise: NoiseParams) -> OutcomeDistribution:
    return OutcomeDistribution(outcome_table(cfg.N_R, noise.p_C, noise.p_R, cfg.phase))


def control_marginals(cfg: ProtocolConfig, noise: NoiseParams):
    return outcome_probabilities(cfg, noise).control_marginals


def control_sigma_z(n_r, p_c, p_r, phase):
    """``<sigma_Z> = P0 - P1`` of the control; ``phase`` may be an array."""
    w = binomial_weights(n_r, p_r)
    m = n_r - 2 * np.arange(n_r + 1)
    return p_c * np.cos(np.multiply.outer(phase, m)) @ w


# -------------------------------------------------------------- Fisher info


class DegenerateDistribution(ValueError):
    pass


def fisher_information(prob_fn, omega, *, dprob_fn=None, h=None, floor=PROB_FLOOR):
    """Classical Fisher information ``sum (d_omega P)^2 / P`` of a family.

    ``prob_fn(omega)`` returns outcome probabilities (any shape). The
    derivative is a central difference with ``h = max(1e-6 |omega|, 1e-9)``
    unless ``dprob_fn`` supplies it analytically. Outcomes with ``P`` below
    ``floor`` are dropped.
    """
    p = np.asarray(prob_fn(omega), float)
    if dprob_fn is not None:
        dp = np.asarray(dprob_fn(omega), float)
    else:
        h = max(1e-6 * abs(omega), 1e-9) if h is None else h
        dp = (np.asarray(prob_fn(omega + h), float) - np.asarray(prob_fn(omega - h), float)) / (2 * h)
    keep = p > floor
    if not np.any(keep):
        raise DegenerateDistribution("all outcome probabilities are below the floor")
    return float(np.sum(dp[keep] ** 2 / p[keep]))


def full_fisher(n_r, p_c, p_r, omega, t, **kw):
    """Fisher information of the joint (control, register-count) outcome."""
    return fisher_information(lambda w: outcome_table(n_r, p_c, p_r, w * t), omega, **kw)


def control_fisher(n_r, p_c, p_r, omega, t):
    """Fisher information of the control-only outcome, analytic derivative."""
    w = binomial_weights(n_r, p_r)
    m = n_r - 2 * np.arange(n_r + 1)
    s = p_c * np.dot(w, np.cos(m * omega * t))
    ds = -p_c * t * np.dot(w, m * np.sin(m * omega * t))
    return two_outcome_fisher(s, ds)


def two_outcome_fisher(s, ds):
    """Fisher information of ``P0,1 = (1 +- s)/2`` given ``s`` and ``d s/d omega``.

    Where ``1 - s^2`` vanishes the value is not defined and ``nan`` is returned.
    """
    s = np.asarray(s, float)
    ds = np.asarray(ds, float)
    den = 1.0 - s**2
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(den > 2 * PROB_FLOOR, ds**2 / den, np.nan)
    return f if f.ndim else float(f)


def fisher_closed_form(n_r, p_r, t):
    """``[(1 - p_R^2) N + p_R^2 N^2] t^2``; valid for a pure control (p_C = 1)."""
    return ((1 - p_r**2) * n_r + p_r**2 * n_r**2) * t**2


def sensitivity(F, nu=1, omega=1.0):
    """Relative frequency uncertainty ``1 / (omega sqrt(nu F))``."""
    if nu < 1:
        raise ValueError("nu must be at least 1")
    if omega == 0:
        raise ValueError("omega must be non-zero")
    if F < 0:
        raise ValueError("Fisher information cannot be negative")
    if F == 0:
        warnings.warn("zero Fisher information: the outcome carries no signal", RuntimeWarning)
        return math.inf
    return 1.0 / (abs(omega) * math.sqrt(nu * F))


# ------------------------------------------------------------ Poisson loading


class TruncationError(ValueError):
    pass


def poisson_cutoff(mean_n):
    """Default cutoff: ``N + 12 sqrt(N)``, raised until the tail is below 1e-12."""
    m = int(math.ceil(mean_n + 12 * math.sqrt(mean_n)))
    while poisson.sf(m, mean_n) >= POISSON_TAIL:
        m += 1
    return m


def poisson_average(mean_n, fringe, truncation=None):
    """``sum_m Pois(m; mean) fringe(m)`` for ``m = 0..truncation``.

    ``fringe(m)`` may return an array; results are stacked along axis 0.
    """
    if mean_n <= 0:
        raise ValueError("mean register size must be positive")
    m_max = poisson_cutoff(mean_n) if truncation is None else int(truncation)
    tail = poisson.sf(m_max, mean_n)
    if tail >= POISSON_TAIL:
        raise TruncationError(f"Poisson tail beyond {m_max} is {tail:.2e}")
    ms = np.arange(m_max + 1)
    pm = poisson.pmf(ms, mean_n)
    vals = np.stack([np.asarray(fringe(int(m)), float) for m in ms])
    return np.tensordot(pm, vals, axes=(0, 0))


def poisson_sigma_z(mean_n, phase, p_c=1.0, p_r=1.0):
    """Closed form of the Poisson-averaged control ``<sigma_Z>``.

    Resumming the binomial and Poisson sums gives
    ``p_C exp(N (cos phi - 1)) cos(N p_R sin phi)``.
    """
    phase = np.asarray(phase, float)
    return p_c * np.exp(mean_n * (np.cos(phase) - 1)) * np.cos(mean_n * p_r * np.sin(phase))


def poisson_sigma_z_derivative(mean_n, phase, p_c=1.0, p_r=1.0):
    """``d <sigma_Z> / d phase`` of :func:`poisson_sigma_z`."""
    phase = np.asarray(phase, float)
    env = np.exp(mean_n * (np.cos(phase) - 1))
    arg = mean_n * p_r * np.sin(phase)
    return p_c * env * (
        -mean_n * np.sin(phase) * np.cos(arg) - mean_n * p_r * np.cos(phase) * np.sin(arg)
    )


def poisson_fringe(mean_n, phase, sign=+1, p_c=1.0, p_r=1.0):
    """``P0`` (``sign=+1``) or ``P1`` (``sign=-1``) of the Poisson-loaded control."""
    return 0.5 + 0.5 * sign * poisson_sigma_z(mean_n, phase, p_c, p_r)


def poisson_control_fisher(mean_n, phase, t, p_c=1.0, p_r=1.0):
    """Control-only Fisher information (s^2) with Poisson loading."""
    s = poisson_sigma_z(mean_n, phase, p_c, p_r)
    ds = t * poisson_sigma_z_derivative(mean_n, phase, p_c, p_r)
    return two_outcome_fisher(s, ds)


def best_control_fisher(mean_n, p_c, p_r, *, phase_window=(1e-6, np.pi), n_grid=20001):
    """Largest Poisson-loaded control Fisher information per ``t^2``.

    Scans ``omega t`` over ``phase_window`` (the fringe has period 2 pi and
    is even about multiples of 2 pi) and refines the best grid point.
    Returns ``(F / t^2, phase)``.
    """
    from scipy.optimize import minimize_scalar

    lo, hi = phase_window
    phases = np.geomspace(lo, hi, n_grid)
    f = np.nan_to_num(poisson_control_fisher(mean_n, phases, 1.0, p_c, p_r), nan=-1.0)
    i = int(np.argmax(f))
    a, b = phases[max(i - 1, 0)], phases[min(i + 1, n_grid - 1)]
    res = minimize_scalar(
        lambda x: -np.nan_to_num(poisson_control_fisher(mean_n, x, 1.0, p_c, p_r), nan=-1.0),
        bounds=(a, b),
        method="bounded",
        options={"xatol": 1e-12},
    )
    best = max((-float(res.fun), float(res.x)), (float(f[i]), float(phases[i])))
    return best


def purity_crossover(mean_n, p_c=1.0, target=None, **kw):
    """Smallest ``p_R`` whose best control Fisher reaches ``target`` (per t^2).

    ``target`` defaults to ``mean_n`` pure independent qubits. Returns
    ``0.0`` when even ``p_R = 0`` reaches the target.
    """
    from scipy.optimize import brentq

    target = float(mean_n) if target is None else target

    def gap(p_r):
        return best_control_fisher(mean_n, p_c, p_r, **kw)[0] - target

    if gap(0.0) >= 0:
        return 0.0
    if gap(1.0) < 0:
        return math.nan
    return brentq(gap, 0.0, 1.0, xtol=1e-6)
