"""Fringe fitting, Fisher information of fitted fringes and sensitivity reports."""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from . import analytic

MIN_POINTS = 5
# Quoted contrast law C = p_C exp(-k / gamma_dph), k in kHz. Comparison only:
# as written it rises with linewidth, so nothing asserts against it.
QUOTED_CONTRAST_LAW_KHZ = 0.250


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FringeModel:
    """Smooth control fringe ``<sigma_Z>(omega)``.

    ``cosine``: ``C cos(n_eff omega t + phi) + baseline``.
    ``poisson-envelope``: ``Re[C e^{i phi} exp(n (cos wt - 1) + i n p_R sin wt)]``,
    the Poisson-averaged fringe with ``n = n_eff``.
    """

    kind: str
    contrast: float
    phase: float
    t: float
    n_eff: float
    p_r: float = 1.0
    baseline: float = 0.0

    def _basis(self, omega):
        x = np.asarray(omega, float) * self.t
        if self.kind == "cosine":
            return np.exp(1j * self.n_eff * x), 1j * self.n_eff * self.t * np.exp(1j * self.n_eff * x)
        if self.kind == "poisson-envelope":
            g = self.n_eff * (np.cos(x) - 1) + 1j * self.n_eff * self.p_r * np.sin(x)
            dg = self.t * (-self.n_eff * np.sin(x) + 1j * self.n_eff * self.p_r * np.cos(x))
            return np.exp(g), dg * np.exp(g)
        raise ValueError(f"unknown fringe model {self.kind!r}")

    def value(self, omega):
        e, _ = self._basis(omega)
        return np.real(self.contrast * np.exp(1j * self.phase) * e) + self.baseline

    def derivative(self, omega):
        _, de = self._basis(omega)
        return np.real(self.contrast * np.exp(1j * self.phase) * de)


@dataclass(frozen=True)
class FringeFit:
    contrast: float
    phase_offset: float
    center: float  # rad/s, fringe maximum nearest omega0
    residual: float  # RMS
    baseline: float
    contrast_stderr: float
    uncertain: bool
    model: FringeModel


def _design(kind, omega, t, n_eff, p_r, baseline):
    m = FringeModel(kind, 1.0, 0.0, t, n_eff, p_r)
    e, _ = m._basis(omega)
    cols = [e.real, -e.imag]
    if baseline:
        cols.append(np.ones_like(e.real))
    return np.column_stack(cols)


def fit_fringe(data, model="cosine", *, column="sigma_z_mean", n_eff=None, baseline=None):
    """Least-squares fit of a fringe model to a :class:`FringeDataset`.

    Both models are linear in ``C cos(phi)`` and ``C sin(phi)``; the linear
    solution seeds a Levenberg-Marquardt refinement in ``(C, phi, baseline)``.
    """
    cfg = data.config
    omega = data.omega
    y = data.column(column)
    n_eff = float(cfg.mean_n_r if n_eff is None else n_eff)
    baseline = (model == "cosine") if baseline is None else baseline
    return fit_arrays(omega, y, cfg.t, model, n_eff=n_eff, p_r=cfg.noise.p_R,
                      baseline=baseline, omega0=cfg.omega0)


def fit_arrays(omega, y, t, model="cosine", *, n_eff=1.0, p_r=1.0, baseline=True, omega0=None):
    omega = np.asarray(omega, float)
    y = np.asarray(y, float)
    if len(omega) < MIN_POINTS:
        raise FitError(f"need at least {MIN_POINTS} scan points, got {len(omega)}")
    if model not in ("cosine", "poisson-envelope"):
        raise ValueError(f"unknown fringe model {model!r}")
    A = _design(model, omega, t, n_eff, p_r, baseline)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    c0 = float(np.hypot(coef[0], coef[1]))
    phi0 = float(np.arctan2(coef[1], coef[0]))
    b0 = float(coef[2]) if baseline else 0.0

    def resid(p):
        m = FringeModel(model, p[0], p[1], t, n_eff, p_r, p[2] if baseline else 0.0)
        return m.value(omega) - y

    p0 = [c0, phi0] + ([b0] if baseline else [])
    sol = least_squares(resid, p0, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if not sol.success:
        raise FitError(f"fit did not converge ({sol.message}); initial guess {p0}")
    c, phi = float(sol.x[0]), float(sol.x[1])
    if c < 0:
        c, phi = -c, phi + math.pi
    phi = float((phi + math.pi) % (2 * math.pi) - math.pi)
    b = float(sol.x[2]) if baseline else 0.0
    fm = FringeModel(model, c, phi, t, n_eff, p_r, b)
    r = fm.value(omega) - y
    rms = float(np.sqrt(np.mean(r**2)))
    dof = max(len(y) - len(p0), 1)
    sigma2 = float(np.sum(r**2) / dof)
    try:
        cov = np.linalg.inv(A.T @ A) * sigma2
        g = np.array([coef[0], coef[1]]) / max(c0, 1e-300)
        stderr = float(np.sqrt(max(g @ cov[:2, :2] @ g, 0.0)))
    except np.linalg.LinAlgError:
        stderr = math.inf
    uncertain = stderr > 0.5 * c or c < 2 * stderr
    center = _fringe_center(fm, omega0 if omega0 is not None else float(np.mean(omega)))
    return FringeFit(min(c, 1.0) if c <= 1.0 + 1e-9 else c, phi, center, rms, b, stderr, uncertain, fm)


def _fringe_center(model, omega0):
    """Fringe maximum nearest ``omega0``."""
    if model.kind == "cosine":
        period = 2 * math.pi / (model.n_eff * model.t)
        k = np.round((omega0 * model.n_eff * model.t + model.phase) / (2 * math.pi))
        return float((2 * math.pi * k - model.phase) / (model.n_eff * model.t)) if period else omega0
    half = math.pi / model.t
    grid = np.linspace(omega0 - half, omega0 + half, 4001)
    return float(grid[int(np.argmax(model.value(grid)))])


# ------------------------------------------------------------ Fisher info


def numerical_fisher(model, omega, *, stationary_tol=1e-9):
    """Two-outcome Fisher information ``(dS/domega)^2 / (1 - S^2)`` of a model.

    ``model`` is a :class:`FringeModel` (analytic derivative) or a callable
    ``S(omega)`` (central differences). Warns at stationary points.
    """
    if isinstance(model, FringeModel):
        s, ds = model.value(omega), model.derivative(omega)
    else:
        h = max(1e-6 * abs(omega), 1e-9)
        s = model(omega)
        ds = (model(omega + h) - model(omega - h)) / (2 * h)
    s, ds = float(s), float(ds)
    if abs(ds) * (1 + abs(omega)) < stationary_tol:
        warnings.warn("Fisher information evaluated at a stationary point of the fringe", RuntimeWarning)
        return 0.0
    f = analytic.two_outcome_fisher(s, ds)
    return 0.0 if math.isnan(f) else float(f)


@dataclass(frozen=True)
class OperatingPoint:
    offset: float  # rad/s, omega_ad = omega - omega0
    omega: float
    fisher: float


class NoInformativePoint(ValueError):
    pass


def operating_point(model, omega0, *, t=None, n_grid=20001):
    """Offset placing ``omega`` at the largest Fisher information near ``omega0``.

    Searches one fringe period (``omega0 +- pi / t``) on a grid, then refines.
    """
    t = model.t if isinstance(model, FringeModel) and t is None else t
    if not t:
        raise ValueError("interaction time needed for the search window")
    half = math.pi / t
    grid = np.linspace(omega0 - half, omega0 + half, n_grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        f = np.array([numerical_fisher(model, w) for w in grid])
        if not np.any(f > 0):
            raise NoInformativePoint("the fringe carries no information near omega0")
        i = int(np.argmax(f))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
        res = minimize_scalar(lambda w: -numerical_fisher(model, w), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-10 * max(abs(omega0), 1)})
    w_best, f_best = (float(res.x), -float(res.fun)) if -res.fun >= f[i] else (float(grid[i]), float(f[i]))
    return OperatingPoint(w_best - omega0, w_best, f_best)


@dataclass(frozen=True)
class SensitivityReport:
    S_Q: float
    S_C: float
    ratio: float
    fisher: float
    omega: float
    nu_convention: str = "per shot (nu = 1)"


def sensitivity_report(F, omega, t, mean_n):
    """Per-shot sensitivities: ``S_Q = 1/(omega sqrt F)``, ``S_C = 1/(omega t sqrt N)``."""
    if F < 0:
        raise ValueError("Fisher information cannot be negative")
    s_c = 1.0 / (omega * t * math.sqrt(mean_n))
    if F == 0:
        return SensitivityReport(math.inf, s_c, math.nan, 0.0, omega)
    s_q = analytic.sensitivity(F, 1, omega)
    return SensitivityReport(s_q, s_c, s_c / s_q, F, omega)


def dataset_sensitivity(data, model="poisson-envelope", *, column="sigma_z_mean"):
    """Fit, locate the operating point and report sensitivity for a dataset."""
    cfg = data.config
    fit = fit_fringe(data, model, column=column)
    op = operating_point(fit.model, cfg.omega0)
    return fit, op, sensitivity_report(op.fisher, cfg.omega0, cfg.t, cfg.mean_n_r)


def fit_linewidth_decay(linewidths_hz, contrasts):
    """Fit ``C = C0 exp(-k gamma)`` (gamma in kHz) by log-linear least squares.

    Returns ``(C0, k_per_khz, monotone)``; ``monotone`` is True when contrast
    never rises with linewidth.
    """
    g = np.asarray(linewidths_hz, float) / 1e3
    c = np.asarray(contrasts, float)
    if g.size < 2 or g.shape != c.shape or np.any(c <= 0):
        raise ValueError("need at least two positive contrasts, one per linewidth")
    order = np.argsort(g)
    slope, icept = np.polyfit(g[order], np.log(c[order]), 1)
    return float(np.exp(icept)), float(-slope), bool(np.all(np.diff(c[order]) <= 0))
