"""Continuous-time LTI state-space algebra.

Realization arithmetic, interconnections, linear fractional transformations,
frequency response, gridded H-infinity norms, and zero-order-hold
discretization.  Everything operates on plain real (A, B, C, D) realizations;
all functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import (
    AlgebraicLoop,
    DimensionMismatch,
    NonInvertibleScale,
    SingularAtFrequency,
    UnstableSystem,
)


def _as_matrix(m, rows=None, cols=None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(m, dtype=float))
    if a.size == 0:
        a = a.reshape(rows if rows is not None else 0, cols if cols is not None else 0)
    return a


@dataclass(frozen=True)
class StateSpaceModel:
    """Real state-space realization ``(A, B, C, D)``.

    ``n_states == 0`` is permitted and represents a static gain ``D``.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.a)
        n = a.shape[0]
        if a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"A must be square, got {a.shape}")
        d = _as_matrix(self.d)
        ny, nu = d.shape
        b = _as_matrix(self.b, rows=n, cols=nu)
        c = _as_matrix(self.c, rows=ny, cols=n)
        if b.shape != (n, nu):
            raise DimensionMismatch(f"B must be {(n, nu)}, got {b.shape}")
        if c.shape != (ny, n):
            raise DimensionMismatch(f"C must be {(ny, n)}, got {c.shape}")
        for name, m in (("A", a), ("B", b), ("C", c), ("D", d)):
            if m.size and not np.all(np.isfinite(m)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.d.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.d.shape[0]

    def poles(self) -> np.ndarray:
        if self.n_states == 0:
            return np.zeros(0, dtype=complex)
        return np.linalg.eigvals(self.a)

    def to_dict(self) -> dict:
        return {
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "d": self.d.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StateSpaceModel":
        return cls(
            a=np.asarray(data["a"], dtype=float).reshape(len(data["a"]), -1)
            if data["a"]
            else np.zeros((0, 0)),
            b=np.asarray(data["b"], dtype=float)
            if data["b"]
            else np.zeros((0, np.shape(data["d"])[1] if data["d"] else 0)),
            c=np.asarray(data["c"], dtype=float)
            if data["c"]
            else np.zeros((np.shape(data["d"])[0] if data["d"] else 0, 0)),
            d=np.asarray(data["d"], dtype=float),
        )


def static_gain(d) -> StateSpaceModel:
    """Zero-state realization of a constant gain matrix."""
    d = _as_matrix(d)
    ny, nu = d.shape
    return StateSpaceModel(
        a=np.zeros((0, 0)), b=np.zeros((0, nu)), c=np.zeros((ny, 0)), d=d
    )


def identity(n: int) -> StateSpaceModel:
    return static_gain(np.eye(n))


def from_tf(num, den) -> StateSpaceModel:
    """SISO realization of ``num(s)/den(s)`` (coefficients highest power first)."""
    num = np.atleast_1d(np.asarray(num, dtype=float))
    den = np.atleast_1d(np.asarray(den, dtype=float))
    den = np.trim_zeros(den, "f")
    if den.size == 0:
        raise ValueError("denominator is zero")
    if num.size > den.size:
        raise ValueError("improper transfer function")
    a, b, c, d = _tf2ss(num, den)
    return StateSpaceModel(a=a, b=b, c=c, d=d)


def _tf2ss(num, den):
    """Balanced-companion realization of a proper SISO transfer function.

    The raw companion form of a wide-band polynomial is badly scaled, so a
    diagonal state equilibration is applied before returning.
    """
    den = np.asarray(den, dtype=float)
    num = np.asarray(num, dtype=float)
    n = den.size - 1
    den_monic = den / den[0]
    num_full = np.zeros(n + 1)
    num_full[n + 1 - num.size :] = num / den[0]
    d = num_full[0]
    # strictly proper remainder: num_full - d * den_monic
    rem = num_full - d * den_monic
    if n == 0:
        return np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), np.array([[d]])
    a = np.zeros((n, n))
    a[:-1, 1:] = np.eye(n - 1)
    a[-1, :] = -den_monic[1:][::-1]
    b = np.zeros((n, 1))
    b[-1, 0] = 1.0
    c = rem[1:][::-1].reshape(1, n)
    sys_mat = np.block([[a, b], [c, np.zeros((1, 1))]])
    _, t_full = scipy.linalg.matrix_balance(sys_mat, permute=False)
    t = t_full[:n, :n]
    tinv = np.diag(1.0 / np.diag(t))
    return tinv @ a @ t, tinv @ b, c @ t, np.array([[d]])


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing positive angular frequencies (rad/s)."""

    omegas: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.omegas, dtype=float))
        if w.size == 0:
            raise ValueError("frequency grid is empty")
        if np.any(w <= 0):
            raise ValueError("frequency grid entries must be positive")
        if np.any(np.diff(w) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        object.__setattr__(self, "omegas", w)

    def __len__(self) -> int:
        return self.omegas.size

    @classmethod
    def log_spaced(cls, omega_min: float, omega_max: float, n: int) -> "FrequencyGrid":
        return cls(np.logspace(np.log10(omega_min), np.log10(omega_max), n))

    @classmethod
    def log_spaced_hz(cls, f_min: float, f_max: float, n: int) -> "FrequencyGrid":
        return cls.log_spaced(2 * np.pi * f_min, 2 * np.pi * f_max, n)


@dataclass(frozen=True)
class FrequencyResponseSet:
    """Complex response matrices sampled on a frequency grid.

    ``values`` has shape ``(len(grid), n_outputs, n_inputs)``.
    """

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 3:
            raise DimensionMismatch("values must be a (n_freq, ny, nu) array")
        if v.shape[0] != len(self.grid):
            raise DimensionMismatch("values length must match grid length")
        object.__setattr__(self, "values", v)

    @property
    def n_outputs(self) -> int:
        return self.values.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.values.shape[2]

    def sigma_max(self) -> np.ndarray:
        """Largest singular value at each grid point."""
        return np.linalg.svd(self.values, compute_uv=False)[:, 0]


def freq_response(sys: StateSpaceModel, grid: FrequencyGrid) -> FrequencyResponseSet:
    """Evaluate ``C (jw I - A)^{-1} B + D`` on the grid by dense solves."""
    n = sys.n_states
    values = np.empty((len(grid), sys.n_outputs, sys.n_inputs), dtype=complex)
    if n == 0:
        values[:] = sys.d
        return FrequencyResponseSet(grid=grid, values=values)
    eye = np.eye(n)
    for k, w in enumerate(grid.omegas):
        try:
            x = np.linalg.solve(1j * w * eye - sys.a, sys.b)
        except np.linalg.LinAlgError as exc:
            raise SingularAtFrequency(w) from exc
        if not np.all(np.isfinite(x)):
            raise SingularAtFrequency(w)
        values[k] = sys.c @ x + sys.d
    return FrequencyResponseSet(grid=grid, values=values)


def response_at(sys: StateSpaceModel, omega: float) -> np.ndarray:
    """Single-frequency response matrix."""
    if sys.n_states == 0:
        return sys.d.astype(complex)
    try:
        x = np.linalg.solve(1j * omega * np.eye(sys.n_states) - sys.a, sys.b)
    except np.linalg.LinAlgError as exc:
        raise SingularAtFrequency(omega) from exc
    return sys.c @ x + sys.d


def series(g1: StateSpaceModel, g2: StateSpaceModel) -> StateSpaceModel:
    """Cascade ``g2 * g1`` (signal flows through ``g1`` first)."""
    if g1.n_outputs != g2.n_inputs:
        raise DimensionMismatch(
            f"series: g1 has {g1.n_outputs} outputs, g2 expects {g2.n_inputs} inputs"
        )
    n1, n2 = g1.n_states, g2.n_states
    a = np.block(
        [
            [g1.a, np.zeros((n1, n2))],
            [g2.b @ g1.c, g2.a],
        ]
    )
    b = np.vstack([g1.b, g2.b @ g1.d])
    c = np.hstack([g2.d @ g1.c, g2.c])
    d = g2.d @ g1.d
    return StateSpaceModel(a=a, b=b, c=c, d=d)


def parallel(g1: StateSpaceModel, g2: StateSpaceModel) -> StateSpaceModel:
    """Sum ``g1 + g2`` with shared input and output."""
    if g1.n_inputs != g2.n_inputs or g1.n_outputs != g2.n_outputs:
        raise DimensionMismatch("parallel: systems must share input/output dimensions")
    n1, n2 = g1.n_states, g2.n_states
    a = np.block([[g1.a, np.zeros((n1, n2))], [np.zeros((n2, n1)), g2.a]])
    b = np.vstack([g1.b, g2.b])
    c = np.hstack([g1.c, g2.c])
    return StateSpaceModel(a=a, b=b, c=c, d=g1.d + g2.d)


def block_diag(models: list[StateSpaceModel]) -> StateSpaceModel:
    """Block-diagonal aggregation (inputs and outputs stacked)."""
    if not models:
        raise ValueError("block_diag requires at least one model")
    a = scipy.linalg.block_diag(*[m.a for m in models])
    b = scipy.linalg.block_diag(*[m.b for m in models])
    c = scipy.linalg.block_diag(*[m.c for m in models])
    d = scipy.linalg.block_diag(*[m.d for m in models])
    return StateSpaceModel(a=a, b=b, c=c, d=d)


def scalar_times_identity(w: StateSpaceModel, n: int) -> StateSpaceModel:
    """Repeat a SISO system on the diagonal, realizing ``w(s) * I_n``."""
    if w.n_inputs != 1 or w.n_outputs != 1:
        raise DimensionMismatch("scalar_times_identity requires a SISO system")
    return block_diag([w] * n)


def stack_outputs(g1: StateSpaceModel, g2: StateSpaceModel) -> StateSpaceModel:
    """Share the input, stack the outputs of ``g1`` above ``g2``."""
    if g1.n_inputs != g2.n_inputs:
        raise DimensionMismatch("stack_outputs: systems must share the input")
    n1, n2 = g1.n_states, g2.n_states
    a = np.block([[g1.a, np.zeros((n1, n2))], [np.zeros((n2, n1)), g2.a]])
    b = np.vstack([g1.b, g2.b])
    c = np.block(
        [
            [g1.c, np.zeros((g1.n_outputs, n2))],
            [np.zeros((g2.n_outputs, n1)), g2.c],
        ]
    )
    d = np.vstack([g1.d, g2.d])
    return StateSpaceModel(a=a, b=b, c=c, d=d)


def feedback(g: StateSpaceModel, h: StateSpaceModel, sign: int = -1) -> StateSpaceModel:
    """Closed loop ``g (I - sign*h*g)^{-1}`` from loop input to ``g`` output.

    The loop is ``y = g(w + sign * h(y))``.
    """
    if g.n_outputs != h.n_inputs or h.n_outputs != g.n_inputs:
        raise DimensionMismatch("feedback: incompatible loop dimensions")
    ny = g.n_outputs
    loop = np.eye(ny) - sign * (g.d @ h.d)
    try:
        m = np.linalg.solve(loop, np.eye(ny))
    except np.linalg.LinAlgError as exc:
        raise AlgebraicLoop("feedthrough loop matrix is singular") from exc
    if np.linalg.cond(loop) > 1e12:
        raise AlgebraicLoop("feedthrough loop matrix is numerically singular")
    ng, nh = g.n_states, h.n_states
    # y = M (Cg xg + sign Dg Ch xh + Dg w)
    cy_g = m @ g.c
    cy_h = sign * (m @ g.d @ h.c)
    dy = m @ g.d
    # u_in = w + sign (Ch xh + Dh y)
    cu_g = sign * (h.d @ cy_g)
    cu_h = sign * h.c + sign * (h.d @ cy_h)
    du = np.eye(g.n_inputs) + sign * (h.d @ dy)
    a = np.block(
        [
            [g.a + g.b @ cu_g, g.b @ cu_h],
            [h.b @ cy_g, h.a + h.b @ cy_h],
        ]
    )
    b = np.vstack([g.b @ du, h.b @ dy])
    c = np.hstack([cy_g, cy_h])
    return StateSpaceModel(a=a, b=b, c=c, d=dy)


@dataclass(frozen=True)
class PlantDims:
    """Channel partition of a generalized plant.

    Outputs are ordered ``(delta_out | z | meas)`` and inputs
    ``(delta_in | w | ctl)``.
    """

    n_delta_out: int
    n_z: int
    n_delta_in: int
    n_w: int
    n_meas: int
    n_ctl: int

    @property
    def n_outputs(self) -> int:
        return self.n_delta_out + self.n_z + self.n_meas

    @property
    def n_inputs(self) -> int:
        return self.n_delta_in + self.n_w + self.n_ctl


@dataclass(frozen=True)
class GeneralizedPlant:
    """Partitioned state-space plant for synthesis and analysis."""

    sys: StateSpaceModel
    dims: PlantDims

    def __post_init__(self):
        if self.sys.n_outputs != self.dims.n_outputs:
            raise DimensionMismatch(
                f"plant has {self.sys.n_outputs} outputs, partition sums to {self.dims.n_outputs}"
            )
        if self.sys.n_inputs != self.dims.n_inputs:
            raise DimensionMismatch(
                f"plant has {self.sys.n_inputs} inputs, partition sums to {self.dims.n_inputs}"
            )

    def synthesis_blocks(self):
        """Split into DGKF blocks with all non-measurement outputs as z.

        Returns ``(A, B1, B2, C1, C2, D11, D12, D21, D22)`` where the
        disturbance block stacks the perturbation and exogenous channels.
        """
        d = self.dims
        m1 = d.n_delta_in + d.n_w
        p1 = d.n_delta_out + d.n_z
        sys = self.sys
        b1, b2 = sys.b[:, :m1], sys.b[:, m1:]
        c1, c2 = sys.c[:p1, :], sys.c[p1:, :]
        d11 = sys.d[:p1, :m1]
        d12 = sys.d[:p1, m1:]
        d21 = sys.d[p1:, :m1]
        d22 = sys.d[p1:, m1:]
        return sys.a, b1, b2, c1, c2, d11, d12, d21, d22

    def to_dict(self) -> dict:
        d = self.dims
        return {
            "sys": self.sys.to_dict(),
            "dims": [d.n_delta_out, d.n_z, d.n_delta_in, d.n_w, d.n_meas, d.n_ctl],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GeneralizedPlant":
        return cls(
            sys=StateSpaceModel.from_dict(data["sys"]),
            dims=PlantDims(*data["dims"]),
        )


def lft_lower(p: GeneralizedPlant, k: StateSpaceModel) -> StateSpaceModel:
    """Close the measurement/control channels of ``p`` with ``k``.

    Returns a realization of ``P11 + P12 K (I - P22 K)^{-1} P21`` on the
    remaining channels.
    """
    d = p.dims
    if k.n_inputs != d.n_meas or k.n_outputs != d.n_ctl:
        raise DimensionMismatch(
            f"controller is {k.n_outputs}x{k.n_inputs}, plant expects {d.n_ctl}x{d.n_meas}"
        )
    sys = p.sys
    nw = d.n_delta_in + d.n_w
    nz = d.n_delta_out + d.n_z
    a = sys.a
    b1, b2 = sys.b[:, :nw], sys.b[:, nw:]
    c1, c2 = sys.c[:nz, :], sys.c[nz:, :]
    d11, d12 = sys.d[:nz, :nw], sys.d[:nz, nw:]
    d21, d22 = sys.d[nz:, :nw], sys.d[nz:, nw:]
    r2 = np.eye(d.n_ctl) - k.d @ d22
    if d.n_ctl and np.linalg.cond(r2) > 1e12:
        raise AlgebraicLoop("LFT feedthrough loop (I - Dk D22) is singular")
    r2inv = np.linalg.solve(r2, np.eye(d.n_ctl)) if d.n_ctl else r2
    r1 = np.eye(d.n_meas) - d22 @ k.d
    r1inv = np.linalg.solve(r1, np.eye(d.n_meas)) if d.n_meas else r1
    n, nk = sys.n_states, k.n_states
    a_cl = np.block(
        [
            [a + b2 @ r2inv @ k.d @ c2, b2 @ r2inv @ k.c],
            [k.b @ r1inv @ c2, k.a + k.b @ d22 @ r2inv @ k.c],
        ]
    )
    b_cl = np.vstack([b1 + b2 @ r2inv @ k.d @ d21, k.b @ r1inv @ d21])
    c_cl = np.hstack([c1 + d12 @ r2inv @ k.d @ c2, d12 @ r2inv @ k.c])
    d_cl = d11 + d12 @ r2inv @ k.d @ d21
    return StateSpaceModel(a=a_cl, b=b_cl, c=c_cl, d=d_cl)


def is_stable(sys: StateSpaceModel, tol: float = 0.0) -> bool:
    """True when all eigenvalues of ``A`` have real part below ``-tol``."""
    if sys.n_states == 0:
        return True
    return bool(np.max(np.real(sys.poles())) < -tol)


def _golden_max(fun, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200):
    """Golden-section maximization on ``[lo, hi]``; returns (x, fun(x))."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = fun(x1), fun(x2)
    for _ in range(max_iter):
        if (b - a) <= tol * max(abs(a), abs(b), 1.0):
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = fun(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = fun(x1)
    xs = [(a, fun(a)), (x1, f1), (x2, f2), (b, fun(b))]
    return max(xs, key=lambda t: t[1])


def hinf_norm_gridded(
    sys: StateSpaceModel, grid: FrequencyGrid
) -> tuple[float, float]:
    """Peak gain over the grid with local golden-section refinement.

    Returns ``(norm, argmax_omega)``.  Raises :class:`UnstableSystem` when
    ``A`` has eigenvalues in the closed right half-plane.
    """
    if not is_stable(sys):
        raise UnstableSystem("H-infinity norm requires a stable system")
    resp = freq_response(sys, grid)
    sig = resp.sigma_max()
    k = int(np.argmax(sig))
    w = grid.omegas
    lo = w[max(k - 1, 0)]
    hi = w[min(k + 1, len(w) - 1)]

    def gain(omega):
        return float(np.linalg.svd(response_at(sys, omega), compute_uv=False)[0])

    if hi > lo:
        w_star, g_star = _golden_max(gain, lo, hi, tol=1e-12)
    else:
        w_star, g_star = w[k], float(sig[k])
    if g_star < sig[k]:
        w_star, g_star = w[k], float(sig[k])
    return g_star, w_star


def discretize_zoh(sys: StateSpaceModel, dt: float) -> StateSpaceModel:
    """Zero-order-hold discretization via the augmented matrix exponential.

    ``C`` and ``D`` are unchanged; the returned realization is a discrete-time
    recursion ``x[k+1] = A x[k] + B u[k]``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n, nu = sys.n_states, sys.n_inputs
    if n == 0:
        return sys
    m = np.zeros((n + nu, n + nu))
    m[:n, :n] = sys.a
    m[:n, n:] = sys.b
    phi = scipy.linalg.expm(m * dt)
    return StateSpaceModel(a=phi[:n, :n], b=phi[:n, n:], c=sys.c, d=sys.d)


def inverse_biproper(sys: StateSpaceModel) -> StateSpaceModel:
    """Realization of ``sys^{-1}`` for square systems with invertible ``D``."""
    if sys.n_inputs != sys.n_outputs:
        raise DimensionMismatch("inverse requires a square system")
    d = sys.d
    if d.size == 0 or np.linalg.cond(d) > 1e12:
        raise NonInvertibleScale("feedthrough matrix is singular")
    dinv = np.linalg.solve(d, np.eye(d.shape[0]))
    return StateSpaceModel(
        a=sys.a - sys.b @ dinv @ sys.c,
        b=sys.b @ dinv,
        c=-dinv @ sys.c,
        d=dinv,
    )
