"""Synthetic two-joint flexible manipulator population and simulation.

Generates members with varied joint stiffness, excites them with odd
random-phase multisines, estimates frequency response matrices from the
simulated records, runs observers and per-configuration Kalman filters, and
summarizes estimation errors.

Per joint (hub inertia ``J_h``, link inertia ``J_l``, stiffness ``k``):

    J_h * theta'' = k_t u + k alpha - b_h theta'
    J_l * (theta'' + alpha'') = -k alpha - b_l alpha'

Link damping acts on the relative deflection rate so the spring is unloaded
at any constant-input steady state.  States are the four angular positions
followed by their rates; the process model maps motor currents to the
positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DimensionMismatch,
    LengthMismatch,
    LineAboveNyquist,
    RankDeficientExcitation,
)
from .obsplant import ObserverRealization
from .sslib import (
    FrequencyGrid,
    FrequencyResponseSet,
    StateSpaceModel,
    discretize_zoh,
)
from .synthesis import KalmanGain
from .uncertainty import PopulationModel

MEASUREMENT_MATRIX = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
)


@dataclass(frozen=True)
class JointParams:
    """Physical parameters of one flexible joint."""

    j_h: float = 2e-3  # hub inertia, kg m^2
    j_l: float = 8e-3  # link inertia, kg m^2
    k: float = 2.0  # joint stiffness, N m / rad
    b_h: float = 5e-3  # hub viscous damping, N m s / rad
    b_l: float = 1e-3  # link viscous damping, N m s / rad
    k_t: float = 0.1  # current-to-torque gain, N m / A

    def __post_init__(self):
        for name in ("j_h", "j_l", "k", "b_h", "b_l", "k_t"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    def scaled_stiffness(self, scale: float) -> "JointParams":
        return JointParams(
            j_h=self.j_h, j_l=self.j_l, k=self.k * scale,
            b_h=self.b_h, b_l=self.b_l, k_t=self.k_t,
        )


DEFAULT_SCALES = ((0.7, 0.7), (0.85, 0.85), (1.15, 1.15), (1.4, 1.4))


@dataclass(frozen=True)
class PopulationSpec:
    """Base joint parameters, stiffness scale pairs, and the master seed."""

    base: tuple[JointParams, JointParams] = (JointParams(), JointParams())
    stiffness_scales: tuple[tuple[float, float], ...] = DEFAULT_SCALES
    seed: int = 0

    def __post_init__(self):
        if not self.stiffness_scales:
            raise ValueError("at least one stiffness configuration required")
        for s1, s2 in self.stiffness_scales:
            if s1 <= 0 or s2 <= 0:
                raise ValueError("stiffness scales must be positive")


def make_member(params: tuple[JointParams, JointParams]) -> StateSpaceModel:
    """8-state process model from motor currents to the four positions."""
    blocks_a = []
    blocks_b = []
    for p in params:
        # per joint states (theta, alpha, theta_dot, alpha_dot)
        th_dd = np.array([0.0, p.k / p.j_h, -p.b_h / p.j_h, 0.0])
        al_dd = np.array([0.0, -p.k / p.j_l, 0.0, -p.b_l / p.j_l]) - th_dd
        a = np.zeros((4, 4))
        a[0, 2] = 1.0
        a[1, 3] = 1.0
        a[2, :] = th_dd
        a[3, :] = al_dd
        b = np.zeros((4, 1))
        b[2, 0] = p.k_t / p.j_h
        b[3, 0] = -p.k_t / p.j_h
        blocks_a.append(a)
        blocks_b.append(b)
    # interleave: states (th1, al1, th2, al2, th1., al1., th2., al2.)
    perm = np.zeros((8, 8))
    for j in range(2):  # joint
        for s in range(4):  # local state
            local = 4 * j + s
            glob = (s % 2) + 2 * j + 4 * (s // 2)
            perm[glob, local] = 1.0
    a_loc = np.block(
        [
            [blocks_a[0], np.zeros((4, 4))],
            [np.zeros((4, 4)), blocks_a[1]],
        ]
    )
    b_loc = np.block(
        [
            [blocks_b[0], np.zeros((4, 1))],
            [np.zeros((4, 1)), blocks_b[1]],
        ]
    )
    a = perm @ a_loc @ perm.T
    b = perm @ b_loc
    c = np.hstack([np.eye(4), np.zeros((4, 4))])
    return StateSpaceModel(a=a, b=b, c=c, d=np.zeros((4, 2)))


def resonant_frequencies(model: StateSpaceModel) -> np.ndarray:
    """Sorted natural frequencies (Hz) of the oscillatory modes."""
    eigs = model.poles()
    osc = eigs[np.abs(eigs.imag) > 1e-6]
    return np.sort(np.unique(np.round(np.abs(osc) / (2 * np.pi), 9)))


def make_population(spec: PopulationSpec) -> PopulationModel:
    """Members at each stiffness scale; nominal at the geometric-mean scale."""
    members = []
    labels = []
    for i, (s1, s2) in enumerate(spec.stiffness_scales):
        members.append(
            make_member(
                (spec.base[0].scaled_stiffness(s1), spec.base[1].scaled_stiffness(s2))
            )
        )
        labels.append(f"cfg{i + 1}")
    scales = np.asarray(spec.stiffness_scales, dtype=float)
    gm = np.exp(np.mean(np.log(scales), axis=0))
    nominal = make_member(
        (spec.base[0].scaled_stiffness(gm[0]), spec.base[1].scaled_stiffness(gm[1]))
    )
    return PopulationModel(
        nominal=nominal,
        members=members,
        measurement=MEASUREMENT_MATRIX,
        labels=labels,
    )


@dataclass(frozen=True)
class MultisineDesign:
    """Excited DFT lines of a periodic odd multisine."""

    period_samples: int
    dt: float
    lines: np.ndarray  # integer DFT bins of one period
    amplitude_rms: float

    @property
    def frequencies_hz(self) -> np.ndarray:
        return self.lines / (self.period_samples * self.dt)

    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(2.0 * np.pi * self.frequencies_hz)


def odd_lines(period_samples: int, dt: float, f_lo: float, f_hi: float) -> np.ndarray:
    """Odd DFT bins whose frequencies fall inside ``[f_lo, f_hi]`` Hz."""
    df = 1.0 / (period_samples * dt)
    k_lo = int(np.ceil(f_lo / df))
    k_hi = int(np.floor(f_hi / df))
    lines = np.arange(k_lo | 1, k_hi + 1, 2)
    if lines.size == 0:
        raise ValueError("no odd lines inside the requested band")
    return lines


def multisine(design: MultisineDesign, seed: int) -> np.ndarray:
    """One period of an odd random-phase multisine, scaled to the RMS level.

    Distinct seeds share the amplitude spectrum and differ only in phase.
    """
    n, lines = design.period_samples, np.asarray(design.lines)
    if np.any(lines >= n / 2):
        raise LineAboveNyquist(f"line {int(lines.max())} at or above Nyquist bin {n // 2}")
    if np.any(lines <= 0):
        raise ValueError("excited lines must be positive bins")
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=lines.size)
    t = np.arange(n)
    # Equal line amplitudes; RMS of orthogonal cosines is phase independent.
    per_line = design.amplitude_rms * np.sqrt(2.0 / lines.size)
    u = per_line * np.sum(
        np.cos(2.0 * np.pi * lines[None, :] * t[:, None] / n + phases[None, :]), axis=1
    )
    return u


@dataclass(frozen=True)
class SimRecord:
    """One simulated experiment: inputs, true positions, noisy measurements."""

    dt: float
    u: np.ndarray  # (n_samples, n_u), A
    x: np.ndarray  # (n_samples, n_x), rad
    y: np.ndarray  # (n_samples, n_y), rad, noise included
    noise_seed: int


def rollout(sys_d: StateSpaceModel, u: np.ndarray, x0: np.ndarray | None = None):
    """Discrete state recursion; returns outputs (n_samples, n_outputs)."""
    n = u.shape[0]
    x = np.zeros(sys_d.n_states) if x0 is None else np.asarray(x0, dtype=float)
    out = np.empty((n, sys_d.n_outputs))
    for k in range(n):
        out[k] = sys_d.c @ x + sys_d.d @ u[k]
        x = sys_d.a @ x + sys_d.b @ u[k]
    return out


def simulate(
    model: StateSpaceModel,
    u: np.ndarray,
    dt: float,
    y_std_deg: float,
    seed: int,
    measurement: np.ndarray = MEASUREMENT_MATRIX,
) -> SimRecord:
    """ZOH-discretized rollout with Gaussian measurement noise (seeded)."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != model.n_inputs:
        u = u.T
    if u.shape[1] != model.n_inputs:
        raise DimensionMismatch("input record width does not match the model")
    sys_d = discretize_zoh(model, dt)
    x = rollout(sys_d, u)
    rng = np.random.default_rng(seed)
    noise = np.deg2rad(y_std_deg) * rng.standard_normal((u.shape[0], measurement.shape[0]))
    y = x @ measurement.T + noise
    return SimRecord(dt=dt, u=u, x=x, y=y, noise_seed=seed)


def simulate_multisine(
    model: StateSpaceModel,
    design: MultisineDesign,
    input_channel: int,
    phase_seed: int,
    n_periods: int,
    y_std_deg: float,
    noise_seed: int,
    measurement: np.ndarray = MEASUREMENT_MATRIX,
    n_settle_periods: int = 1,
) -> SimRecord:
    """Exact sampled response to the band-limited multisine excitation.

    The particular solution is assembled per excited line from resolvent
    solves (an inverse FFT over one period) and the homogeneous transient is
    propagated by the matrix exponential, so the record samples the true
    continuous response; an estimated response can then be compared against
    the analytic one.  Settle periods are simulated and discarded.
    """
    n = design.period_samples
    rng = np.random.default_rng(phase_seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=design.lines.size)
    per_line = design.amplitude_rms * np.sqrt(2.0 / design.lines.size)
    t = np.arange(n)
    u_period = per_line * np.sum(
        np.cos(2.0 * np.pi * design.lines[None, :] * t[:, None] / n + phases[None, :]),
        axis=1,
    )
    n_states = model.n_states
    spectrum = np.zeros((n, n_states), dtype=complex)
    b_col = model.b[:, input_channel]
    eye = np.eye(n_states)
    for line, phi in zip(design.lines, phases):
        w = 2.0 * np.pi * line / (n * design.dt)
        v = np.linalg.solve(1j * w * eye - model.a, b_col) * (
            per_line * np.exp(1j * phi)
        )
        spectrum[line] = (n / 2.0) * v
        spectrum[n - line] = (n / 2.0) * np.conj(v)
    x_p = np.real(np.fft.ifft(spectrum, axis=0))
    total = (n_settle_periods + n_periods) * n
    ad = discretize_zoh(model, design.dt).a
    x_h = -x_p[0]
    states = np.empty((total, n_states))
    for i in range(total):
        states[i] = x_h + x_p[i % n]
        x_h = ad @ x_h
    keep = slice(n_settle_periods * n, total)
    x = states[keep] @ model.c.T
    u = np.zeros((n_periods * n, model.n_inputs))
    u[:, input_channel] = np.tile(u_period, n_periods)
    rng_n = np.random.default_rng(noise_seed)
    noise = np.deg2rad(y_std_deg) * rng_n.standard_normal(
        (n_periods * n, measurement.shape[0])
    )
    y = x @ measurement.T + noise
    return SimRecord(dt=design.dt, u=u, x=x, y=y, noise_seed=noise_seed)


def frf_estimate(
    records: list[SimRecord],
    design: MultisineDesign,
    n_periods: int | None = None,
    channel: str = "x",
) -> FrequencyResponseSet:
    """Frequency response matrix at the excited bins from DFT ratios.

    Records must hold an integer number of multisine periods; the response is
    solved per bin across the experiments (least squares when there are more
    experiments than inputs).
    """
    if not records:
        raise ValueError("no records given")
    n_u = records[0].u.shape[1]
    if len(records) < n_u:
        raise RankDeficientExcitation(
            f"need at least {n_u} experiments, got {len(records)}"
        )
    period = design.period_samples
    u_spectra = []
    y_spectra = []
    for rec in records:
        n = rec.u.shape[0]
        if n % period:
            raise LengthMismatch("record length is not a multiple of the period")
        avail = n // period
        use = avail if n_periods is None else min(n_periods, avail)
        resp = rec.x if channel == "x" else rec.y
        u_avg = rec.u[: use * period].reshape(use, period, -1).mean(axis=0)
        r_avg = resp[: use * period].reshape(use, period, -1).mean(axis=0)
        u_spectra.append(np.fft.fft(u_avg, axis=0)[design.lines])
        y_spectra.append(np.fft.fft(r_avg, axis=0)[design.lines])
    n_out = y_spectra[0].shape[1]
    values = np.empty((design.lines.size, n_out, n_u), dtype=complex)
    for i in range(design.lines.size):
        u_mat = np.stack([s[i] for s in u_spectra], axis=1)  # (n_u, n_exp)
        y_mat = np.stack([s[i] for s in y_spectra], axis=1)  # (n_out, n_exp)
        if np.linalg.matrix_rank(u_mat, tol=1e-12 * max(1.0, np.abs(u_mat).max())) < n_u:
            raise RankDeficientExcitation(
                f"input spectra rank deficient at bin {int(design.lines[i])}"
            )
        g, *_ = np.linalg.lstsq(u_mat.T, y_mat.T, rcond=None)
        values[i] = g.T
    return FrequencyResponseSet(grid=design.grid(), values=values)


def run_observer(obs: ObserverRealization, record: SimRecord) -> np.ndarray:
    """Drive the discretized observer with the recorded inputs and outputs."""
    if record.u.shape[1] != obs.n_u or record.y.shape[1] != obs.n_y:
        raise DimensionMismatch("record channels do not match the observer")
    sys_d = discretize_zoh(obs.sys, record.dt)
    return rollout(sys_d, np.hstack([record.u, record.y]))


def run_kalman(
    model: StateSpaceModel,
    gain: KalmanGain,
    record: SimRecord,
    measurement: np.ndarray = MEASUREMENT_MATRIX,
) -> np.ndarray:
    """Steady-state Kalman filter rollout on a recorded experiment.

    Continuous correction ``x_hat' = A x_hat + B u + L (y - C x_hat)``
    discretized at the record rate.
    """
    c_full = np.atleast_2d(measurement) @ model.c
    a_obs = model.a - gain.l @ c_full
    obs = StateSpaceModel(
        a=a_obs,
        b=np.hstack([model.b, gain.l]),
        c=model.c,
        d=np.zeros((model.n_outputs, model.n_inputs + c_full.shape[0])),
    )
    sys_d = discretize_zoh(obs, record.dt)
    return rollout(sys_d, np.hstack([record.u, record.y]))


@dataclass(frozen=True)
class ErrorMetrics:
    """Per-state RMS and five-number summary of absolute errors (deg)."""

    rms_deg: np.ndarray
    abs_min_deg: np.ndarray
    abs_q1_deg: np.ndarray
    abs_median_deg: np.ndarray
    abs_q3_deg: np.ndarray
    abs_max_deg: np.ndarray

    def to_dict(self) -> dict:
        return {
            "rms_deg": self.rms_deg.tolist(),
            "abs_min_deg": self.abs_min_deg.tolist(),
            "abs_q1_deg": self.abs_q1_deg.tolist(),
            "abs_median_deg": self.abs_median_deg.tolist(),
            "abs_q3_deg": self.abs_q3_deg.tolist(),
            "abs_max_deg": self.abs_max_deg.tolist(),
        }


def metrics(
    truth: np.ndarray, estimates: np.ndarray, dt: float, transient_s: float = 2.0
) -> ErrorMetrics:
    """Error summary after discarding an initial transient (both in rad)."""
    truth = np.asarray(truth, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    if truth.shape != estimates.shape:
        raise LengthMismatch(
            f"truth {truth.shape} and estimates {estimates.shape} differ"
        )
    skip = int(round(transient_s / dt))
    err = np.rad2deg(estimates[skip:] - truth[skip:])
    abs_err = np.abs(err)
    q = np.percentile(abs_err, [0, 25, 50, 75, 100], axis=0)
    return ErrorMetrics(
        rms_deg=np.sqrt(np.mean(err**2, axis=0)),
        abs_min_deg=q[0],
        abs_q1_deg=q[1],
        abs_median_deg=q[2],
        abs_q3_deg=q[3],
        abs_max_deg=q[4],
    )


def config_seed(master: int, cfg_index: int, purpose: int, extra: int = 0) -> int:
    """Deterministic child seed for a configuration / purpose pair."""
    ss = np.random.SeedSequence([master, cfg_index, purpose, extra])
    return int(ss.generate_state(1)[0])
