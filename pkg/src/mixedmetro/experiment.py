"""Monte-Carlo experiments built on the gate engine and the analytic model.

``run_full_protocol`` simulates the whole interferometer for one to three
register atoms with the master-equation gates. ``gate_contrast_curve``
measures how the fringe contrast falls with register size using
independent per-atom gates, and ``run_large_n`` models a Poisson-loaded
ensemble with losses on top of that curve.
"""

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import curve_fit
from scipy.stats import poisson

from . import analytic
from .gate import gate_records
from .lindblad import BLOCKS, G1, AtomLevelScheme, controlled_gate, qubit_projector_diag
from .rydberg import CONTROL_REGISTER, REGISTER_REGISTER, InteractionParams, PulseParams, pair_shift_matrix
from .trap import CONTROL_TRAP, REGISTER_TRAP, LossModel, TrapGeometry, sample_positions, survival_probability
from .units import G_EARTH, HBAR, RB87_MASS, TWO_PI, mhz_to_rad_per_us, rate_hz_to_per_us

CALIBRATED_AMPLITUDE_SCALE = 2.5090603  # from gate.calibrate_amplitude_scale at default pulses
BLOCKADE_LIMIT_SHIFT = mhz_to_rad_per_us(1e7)
FULL_DYNAMICS_MAX_N = 3


@dataclass(frozen=True)
class GateConfig:
    """Gate parameters in config units (MHz, us, Hz rates)."""

    delta_e_mhz: float = 1000.0
    tau_us: float = 0.5
    amplitude_scale: float = CALIBRATED_AMPLITUDE_SCALE
    omega3_factor: float = 10.0
    gamma_e_hz: float = 6.065e6
    linewidth_hz: float = 10e3
    gamma_ryd_hz: float = 0.0
    n_steps: int = 0  # 0 selects the engine default
    blockade_limit: bool = False

    def pulses(self):
        return PulseParams(mhz_to_rad_per_us(self.delta_e_mhz), self.tau_us,
                           self.amplitude_scale, self.omega3_factor)

    def scheme(self):
        return AtomLevelScheme(
            mhz_to_rad_per_us(self.delta_e_mhz),
            gamma_e=rate_hz_to_per_us(self.gamma_e_hz),
            gamma_dph=rate_hz_to_per_us(self.linewidth_hz),
            gamma_ryd=rate_hz_to_per_us(self.gamma_ryd_hz),
        )

    @property
    def steps(self):
        return self.n_steps or None


@dataclass(frozen=True)
class InteractionConfig:
    control_register: InteractionParams = CONTROL_REGISTER
    register_register: InteractionParams = REGISTER_REGISTER
    register_interactions: bool = True


@dataclass(frozen=True)
class LargeNConfig:
    """Options of the large-register model."""

    gate_model: str = "curve"  # perfect | curve | records
    curve_max_n: int = 9
    curve_nu: int = 49
    losses: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "full_dynamics"  # full_dynamics | large_n_model
    mean_n_r: float = 1
    noise: analytic.NoiseParams = analytic.NoiseParams(0.95, 0.95)
    scan: tuple = tuple(np.round(np.linspace(-0.25, 0.25, 21), 12))
    omega0: float = TWO_PI * 5326.0
    t: float = 375e-6
    nu: int = 49
    seed: int = 0
    ninf: bool = False
    gate: GateConfig = GateConfig()
    interaction: InteractionConfig = InteractionConfig()
    register_trap: TrapGeometry = REGISTER_TRAP
    control_trap: TrapGeometry = CONTROL_TRAP
    loss: LossModel = LossModel()
    large_n: LargeNConfig = LargeNConfig()

    def __post_init__(self):
        if self.mode not in ("full_dynamics", "large_n_model"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if len(self.scan) == 0:
            raise ValueError("scan grid is empty")
        if self.nu < 1:
            raise ValueError("nu must be at least 1")
        if self.t < 0:
            raise ValueError("t must be non-negative")
        if self.mode == "full_dynamics":
            n = self.mean_n_r
            if n != int(n) or not 1 <= n <= FULL_DYNAMICS_MAX_N:
                raise ValueError(
                    f"full_dynamics needs an integer register size 1..{FULL_DYNAMICS_MAX_N}, got {n}"
                )
        elif self.mean_n_r <= 0:
            raise ValueError("mean register size must be positive")

    def replace(self, **kw):
        return replace(self, **kw)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class FringePoint:
    delta: float  # (omega - omega0) / omega0
    sigma_z_mean: float  # estimate from outcome tallies (expectation in ninf mode)
    sigma_z_expect: float  # average of per-repetition expectation values
    n0: float
    n1: float
    losses: float
    leakage: float = 0.0


@dataclass
class FringeDataset:
    points: list
    config: ExperimentConfig
    extra: dict = field(default_factory=dict)

    @property
    def delta(self):
        return np.array([p.delta for p in self.points])

    @property
    def omega(self):
        return self.config.omega0 * (1.0 + self.delta)

    def column(self, name):
        return np.array([getattr(p, name) for p in self.points])

    def rows(self):
        return [asdict(p) for p in self.points]


class ExperimentError(RuntimeError):
    pass


# ------------------------------------------------------------------ helpers


def _streams(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _draw_geometry(cfg, n_r, rng):
    ctrl = sample_positions(cfg.control_trap, 1, rng)
    reg = sample_positions(cfg.register_trap, n_r, rng)
    return np.vstack([ctrl, reg])


def _shift_tables(cfg, positions):
    """Register-register and control-register shifts (rad/us) for one draw."""
    ia = cfg.interaction
    try:
        v = pair_shift_matrix(positions, ia.register_register, ia.control_register)
    except ValueError as exc:
        raise ExperimentError(f"pair shift failed for positions {positions.tolist()}: {exc}") from exc
    vr = v[1:, 1:] if ia.register_interactions else np.zeros_like(v[1:, 1:])
    vc = v[0, 1:]
    if cfg.gate.blockade_limit:
        vc = np.full_like(vc, BLOCKADE_LIMIT_SHIFT)
    return vr, vc


def _excitation_number(n_r):
    """Number of register atoms in |1> for each basis state of the register."""
    d = np.zeros(1)
    one = np.zeros(4)
    one[G1] = 1.0
    for _ in range(n_r):
        d = np.add.outer(d, one).ravel()
    return d.astype(int)


def _register_state(n_r, p_r):
    q0, q1 = (1 + p_r) / 2, (1 - p_r) / 2
    diag = np.ones(1)
    for _ in range(n_r):
        diag = np.kron(diag, np.array([q0, q1, 0.0, 0.0]))
    return np.diag(diag).astype(complex)


@dataclass
class ProtocolCoefficients:
    """Fringe of one repetition as Fourier series in ``phi = omega t``.

    ``num[m]`` and ``den[m]`` multiply ``exp(-i m phi)`` for ``m = -N..N``;
    ``<sigma_Z>(phi) = 2 Re(num(phi)) / Re(den(phi))``.
    """

    m: np.ndarray
    num: np.ndarray  # (B, 2N+1), from the 0x block
    d00: np.ndarray
    dxx: np.ndarray

    @property
    def den(self):
        return self.d00 + self.dxx

    def at(self, phi):
        """Block traces ``(t0x, t00, txx)`` at one phase, each shape (B,)."""
        e = np.exp(-1j * self.m * phi)
        return self.num @ e, (self.d00 @ e).real, (self.dxx @ e).real

    def sigma_z(self, phi):
        e = np.exp(-1j * np.multiply.outer(np.atleast_1d(phi), self.m))  # (P, M)
        num = self.num @ e.T  # (B, P)
        den = (self.den @ e.T).real
        return 2.0 * num.real / den, 1.0 - den


def protocol_coefficients(cfg, shifts1, shifts2, scheme=None, *, control_factors=True):
    """Propagate both gates for a batch of geometries.

    ``shifts1``/``shifts2`` are ``(vr, vc)`` with batch axes ``(B, n, n)`` and
    ``(B, n)``. The first gate is propagated forwards from the prepared
    state, the second backwards from the qubit projector.
    """
    n_r = shifts1[1].shape[-1]
    B = shifts1[1].shape[0]
    scheme = scheme or cfg.gate.scheme()
    pulses = cfg.gate.pulses()
    R = _register_state(n_r, cfg.noise.p_R)
    p_c = cfg.noise.p_C
    start = {"00": 0.5 * R, "xx": 0.5 * R, "0x": 0.5 * p_c * R}
    start = {k: np.broadcast_to(v, (B,) + v.shape) for k, v in start.items()}
    kw = dict(n_steps=cfg.gate.steps, control_factors=control_factors)
    r1 = controlled_gate(start, scheme, pulses, *shifts1, **kw)
    proj = np.diag(qubit_projector_diag(n_r)).astype(complex)
    obs = {k: np.broadcast_to(proj, (B,) + proj.shape) for k in BLOCKS}
    a2 = controlled_gate(obs, scheme, pulses, *shifts2, adjoint=True, **kw)
    nx = _excitation_number(n_r)
    dn = np.subtract.outer(nx, nx)
    ms = np.arange(-n_r, n_r + 1)
    masks = np.stack([dn == m for m in ms])  # (M, d, d)

    def coeff(key):
        prod = np.conj(a2[key]) * r1[key]  # (B, d, d)
        return np.einsum("bij,mij->bm", prod, masks)

    return ProtocolCoefficients(ms, coeff("0x"), coeff("00"), coeff("xx"))


def _draw_shifts(cfg, n_r, streams):
    s1 = [_shift_tables(cfg, _draw_geometry(cfg, n_r, rng)) for rng in streams]
    s2 = [_shift_tables(cfg, _draw_geometry(cfg, n_r, rng)) for rng in streams]
    stack = lambda s: (np.stack([x[0] for x in s]), np.stack([x[1] for x in s]))  # noqa: E731
    return stack(s1), stack(s2)


def _tally(cfg, sz, lost, rng_points):
    """Build fringe points from per-repetition ``sz[b, p]`` and loss flags."""
    nu = cfg.nu
    pts = []
    for j, (d, rng) in enumerate(zip(cfg.scan, rng_points)):
        col = np.where(lost, 0.0, sz[:, j])
        expect = float(col.mean())
        n_loss = float(lost.sum())
        if cfg.ninf:
            p0 = np.where(lost, 0.0, (1 + sz[:, j]) / 2).sum()
            p1 = np.where(lost, 0.0, (1 - sz[:, j]) / 2).sum()
            pts.append(FringePoint(float(d), expect, expect, float(p0), float(p1), n_loss))
            continue
        u = rng.random(nu)
        zero = u < (1 + sz[:, j]) / 2
        n0 = int(np.sum(zero & ~lost))
        n1 = int(np.sum(~zero & ~lost))
        pts.append(FringePoint(float(d), (n0 - n1) / nu, expect, n0, n1, n_loss))
    return pts


# ------------------------------------------------------------ full protocol


def run_full_protocol(cfg: ExperimentConfig) -> FringeDataset:
    """Full master-equation protocol for 1-3 register atoms.

    Each repetition draws fresh control and register positions for each of
    the two gates; its fringe is then evaluated on every scan point, where
    one measurement outcome is drawn per repetition.
    """
    if cfg.mode != "full_dynamics":
        raise ValueError("run_full_protocol needs mode=full_dynamics")
    n_r = int(cfg.mean_n_r)
    streams = _streams(cfg.seed, 2)
    geo = _streams(streams[0].integers(2**63), cfg.nu)
    meas = _streams(streams[1].integers(2**63), len(cfg.scan))
    shifts1, shifts2 = _draw_shifts(cfg, n_r, geo)
    coeffs = protocol_coefficients(cfg, shifts1, shifts2)
    phi = cfg.omega0 * (1.0 + np.asarray(cfg.scan)) * cfg.t
    sz, leak = coeffs.sigma_z(phi)
    if np.any(np.abs(sz) > 1 + 1e-9):
        raise ExperimentError("expectation value outside [-1, 1]")
    sz = np.clip(sz, -1.0, 1.0)
    pts = _tally(cfg, sz, np.zeros(cfg.nu, bool), meas)
    pts = [replace(p, leakage=float(leak[:, j].mean())) for j, p in enumerate(pts)]
    return FringeDataset(pts, cfg, {"n_r": n_r})


# ------------------------------------------------------------ gate contrast


@dataclass(frozen=True)
class GateContrastModel:
    """Contrast of the control fringe against register size.

    ``kind`` is ``"perfect"`` (contrast ``p_C``), ``"curve"`` (fitted
    ``amplitude * exp(-decay * N)``) or ``"records"`` (phase offsets drawn
    from per-atom gate fits, contrast ``p_C``).
    """

    kind: str = "perfect"
    amplitude: float = 1.0
    decay: float = 0.0
    n_values: tuple = ()
    contrasts: tuple = ()
    errors: tuple = ()
    thetas: tuple = ()
    linewidth_hz: float = 0.0

    def contrast(self, n_r, p_c):
        if self.kind == "curve":
            return self.amplitude * np.exp(-self.decay * np.asarray(n_r, float))
        return p_c * np.ones_like(np.asarray(n_r, float))

    def phase_factor(self, n_gates):
        """Mean of ``exp(i sum theta)`` over ``n_gates`` independent draws."""
        if not self.thetas:
            return 1.0 + 0j
        return complex(np.mean(np.exp(1j * np.asarray(self.thetas)))) ** n_gates


class FitFailure(RuntimeError):
    def __init__(self, msg, n_values, contrasts):
        super().__init__(f"{msg}; raw points: {list(zip(n_values, contrasts))}")
        self.n_values, self.contrasts = n_values, contrasts


def per_atom_sigma_z(cfg, n_values, linewidth_hz=None, phase=math.pi):
    """Control ``<sigma_Z>`` with independent per-atom gates, at ``omega t = phase``.

    Register-register interactions are neglected, so each register atom is
    propagated on its own and the register blocks factorise. Returns an
    array ``(len(n_values), nu)``.
    """
    gate = cfg.gate if linewidth_hz is None else replace(cfg.gate, linewidth_hz=linewidth_hz)
    sub = replace(cfg, gate=gate)
    no_rr = replace(sub, interaction=replace(sub.interaction, register_interactions=False))
    streams = _streams(cfg.seed, len(n_values))
    vc1, vc2 = [], []
    for n_r, s in zip(n_values, streams):
        for rng in _streams(s.integers(2**63), cfg.nu):
            vc1.append(_shift_tables(no_rr, _draw_geometry(no_rr, n_r, rng))[1])
            vc2.append(_shift_tables(no_rr, _draw_geometry(no_rr, n_r, rng))[1])
    vc1 = np.concatenate(vc1)[:, None]
    vc2 = np.concatenate(vc2)[:, None]
    zero = np.zeros((len(vc1), 1, 1))
    coeffs = protocol_coefficients(
        replace(sub, noise=analytic.NoiseParams(1.0, cfg.noise.p_R)),
        (zero, vc1), (zero, vc2), control_factors=False,
    )
    # Per-atom traces of unit-normalised blocks; the control's own factors
    # enter once per repetition.
    t0x, t00, txx = (2.0 * x for x in coeffs.at(phase))
    scheme = gate.scheme()
    f0x = np.exp(-gate.tau_us * (scheme.gamma_dph + scheme.gamma_ryd))
    fxx = np.exp(-2.0 * gate.tau_us * scheme.gamma_ryd)
    out = np.zeros((len(n_values), cfg.nu))
    k = 0
    for i, n_r in enumerate(n_values):
        for r in range(cfg.nu):
            sl = slice(k, k + n_r)
            num = 2.0 * cfg.noise.p_C * f0x * np.prod(t0x[sl]).real
            out[i, r] = num / (np.prod(t00[sl]) + fxx * np.prod(txx[sl]))
            k += n_r
    return out


def gate_contrast_curve(max_n, linewidth_hz, cfg: ExperimentConfig, *, phase=math.pi):
    """Contrast against register size with an exponential fit.

    For ``N = 1..max_n`` the fringe value at ``omega t = phase`` is averaged
    over ``cfg.nu`` position draws; its magnitude is the contrast.
    """
    ns = list(range(1, max_n + 1))
    sz = per_atom_sigma_z(cfg, ns, linewidth_hz, phase)
    sign = np.cos(np.asarray(ns) * phase)
    contrast = np.abs(sz.mean(axis=1) * sign)
    err = sz.std(axis=1, ddof=1) / np.sqrt(cfg.nu) if cfg.nu > 1 else np.zeros(len(ns))
    try:
        popt, _ = curve_fit(lambda n, a, k: a * np.exp(-k * n), ns, contrast, p0=(contrast[0], 0.01))
    except (RuntimeError, ValueError) as exc:
        raise FitFailure(str(exc), ns, contrast.tolist()) from exc
    if not np.all(np.isfinite(popt)):
        raise FitFailure("non-finite fit parameters", ns, contrast.tolist())
    return GateContrastModel(
        "curve", float(popt[0]), float(popt[1]), tuple(ns), tuple(contrast.tolist()),
        tuple(err.tolist()), (), float(linewidth_hz),
    )


def sampled_gate_thetas(cfg, n_draws, linewidth_hz=None):
    """Gate phase offsets from fits at sampled control-register distances."""
    gate = cfg.gate if linewidth_hz is None else replace(cfg.gate, linewidth_hz=linewidth_hz)
    rng = _streams(cfg.seed, 1)[0]
    vcs = [_shift_tables(cfg, _draw_geometry(cfg, 1, rng))[1][0] for _ in range(n_draws)]
    recs = gate_records(gate.scheme(), gate.pulses(), np.array(vcs), n_steps=gate.steps)
    return recs


def control_distance_quantile(cfg, q, n_samples=200_000):
    """Quantile ``q`` of the control-register distance (um) over the two traps."""
    rng = _streams(cfg.seed, 1)[0]
    c = sample_positions(cfg.control_trap, n_samples, rng)
    r = sample_positions(cfg.register_trap, n_samples, rng)
    return float(np.quantile(np.linalg.norm(c - r, axis=1), q))


# ---------------------------------------------------------------- large N


def _fringe_value(n_r, p_r, phi, offset=0.0):
    w = analytic.binomial_weights(n_r, p_r)
    m = n_r - 2 * np.arange(n_r + 1)
    return np.cos(np.multiply.outer(phi, m) + offset) @ w


def run_large_n(cfg: ExperimentConfig, gates: GateContrastModel = GateContrastModel()) -> FringeDataset:
    """Poisson-loaded register with two-body losses and imperfect gates.

    Per repetition the register size is Poisson distributed and a loss
    event (probability ``1 - P_no-loss(N)``) zeroes the repetition. The
    surviving fringe is the analytic one with the control purity replaced
    by the gate-model contrast and, for ``records`` models, shifted by the
    summed gate phases. In ``ninf`` mode the Poisson average is exact.
    """
    if cfg.mode != "large_n_model":
        raise ValueError("run_large_n needs mode=large_n_model")
    phi = cfg.omega0 * (1.0 + np.asarray(cfg.scan)) * cfg.t
    p_c, p_r = cfg.noise.p_C, cfg.noise.p_R
    losses_on = cfg.large_n.losses

    def survive(n):
        return survival_probability(n, cfg.t, cfg.register_trap, cfg.loss) if losses_on else 1.0

    if cfg.ninf:
        m_max = analytic.poisson_cutoff(cfg.mean_n_r)
        tot = np.zeros(len(phi))
        for n in range(m_max + 1):
            pn = poisson.pmf(n, cfg.mean_n_r) * survive(n)
            w = analytic.binomial_weights(n, p_r)
            m = n - 2 * np.arange(n + 1)
            chi = gates.phase_factor(2 * n)
            tot += pn * gates.contrast(n, p_c) * np.real(np.exp(1j * np.multiply.outer(phi, m)) * chi) @ w
        lost = 1.0 - sum(poisson.pmf(n, cfg.mean_n_r) * survive(n) for n in range(m_max + 1))
        pts = []
        for d, s in zip(cfg.scan, tot):
            alive = cfg.nu * (1 - lost)
            pts.append(FringePoint(float(d), float(s), float(s),
                                   float(0.5 * (alive + cfg.nu * s)), float(0.5 * (alive - cfg.nu * s)),
                                   float(cfg.nu * lost)))
        return FringeDataset(pts, cfg, {"exact_poisson": True})

    streams = _streams(cfg.seed, 3)
    reps = _streams(streams[0].integers(2**63), cfg.nu)
    meas = _streams(streams[1].integers(2**63), len(cfg.scan))
    thetas = np.asarray(gates.thetas)
    sz = np.zeros((cfg.nu, len(phi)))
    lost = np.zeros(cfg.nu, bool)
    sizes = np.zeros(cfg.nu, int)
    for b, rng in enumerate(reps):
        n = int(rng.poisson(cfg.mean_n_r))
        sizes[b] = n
        lost[b] = rng.random() >= survive(n)
        offset = float(rng.choice(thetas, 2 * n).sum()) if len(thetas) and n else 0.0
        sz[b] = float(gates.contrast(n, p_c)) * _fringe_value(n, p_r, phi, offset)
    pts = _tally(cfg, sz, lost, meas)
    return FringeDataset(pts, cfg, {"register_sizes": sizes.tolist()})


# ---------------------------------------------------------------- gravity


def gravity_omega(dz_um, mass=RB87_MASS, g=G_EARTH):
    """Phase rate ``m g dz / hbar`` (rad/s) of a vertical splitting ``dz`` (um)."""
    if dz_um < 0:
        raise ValueError("dz must be non-negative")
    return mass * g * dz_um * 1e-6 / HBAR


GRAVITY_PRESETS = {
    "quoted_2p5um": TWO_PI * 5326.0,
    "linear_2p5um": TWO_PI * 5363.0,
}
