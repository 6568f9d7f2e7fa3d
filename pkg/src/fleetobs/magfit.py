"""Minimax rational magnitude fitting with spectral factorization.

Fits a stable minimum-phase SISO transfer function whose magnitude matches
(or overbounds) samples on a frequency grid.  The squared magnitude is
parameterized as a ratio of polynomials in ``x = omega**2`` expressed in a
Chebyshev basis; the log-magnitude excess bound is minimized by bisection
over linear-programming feasibility problems.  Numerator and denominator are
then spectral-factored (roots reflected into the left half-plane) to obtain
the realization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy.optimize import linprog

from .exceptions import InfeasibleFit
from .sslib import StateSpaceModel, from_tf, response_at

# Off-grid guard band: outside the sample range the squared-magnitude ratio
# is kept within this factor of the nearest sample target.
_EXT_SLACK = 1e4


@dataclass(frozen=True)
class MagnitudeFit:
    """A fitted magnitude model and its fit diagnostics."""

    model: StateSpaceModel
    order: int
    excess_log10: float  # max |log10(|w|) - log10(target)| over the grid
    magnitudes: np.ndarray  # |w(j omega_k)| on the fit grid


def _cheb_design(x: np.ndarray, order: int, domain) -> np.ndarray:
    t = 2.0 * (x - domain[0]) / (domain[1] - domain[0]) - 1.0
    return cheb.chebvander(t, order)


def _solve_band_lp(
    v_samp: np.ndarray,
    v_ext: np.ndarray,
    upper: np.ndarray,
    lower: np.ndarray,
    ext_upper: np.ndarray,
    ext_lower: np.ndarray,
    q_floor: float,
    mid_row: np.ndarray,
):
    """Feasibility LP for ``lower_k <= P(x_k)/Q(x_k) <= upper_k``.

    The same ratio band (with ``ext_*`` limits) is enforced on the off-grid
    extension points, which keeps both polynomials strictly positive there.
    """
    n_coef = v_samp.shape[1]
    rows = []
    rhs = []

    def band(v, up, lo):
        for k in range(v.shape[0]):
            row = np.concatenate([v[k], -up[k] * v[k]])
            rows.append(row)
            rhs.append(0.0)
            row = np.concatenate([-v[k], lo[k] * v[k]])
            rows.append(row)
            rhs.append(0.0)

    band(v_samp, upper, lower)
    band(v_ext, ext_upper, ext_lower)
    # -Q_j <= -q_floor on all constraint points
    for v in (v_samp, v_ext):
        for k in range(v.shape[0]):
            rows.append(np.concatenate([np.zeros(n_coef), -v[k]]))
            rhs.append(-q_floor)
    a_ub = np.asarray(rows)
    b_ub = np.asarray(rhs)
    scale = np.maximum(np.max(np.abs(a_ub), axis=1), 1e-30)
    a_ub /= scale[:, None]
    b_ub /= scale
    a_eq = np.zeros((1, 2 * n_coef))
    a_eq[0, n_coef:] = mid_row
    # Leading x-coefficients must be nonnegative for positivity on [0, inf);
    # in the Chebyshev basis that is a sign constraint on the last coefficient.
    bounds = [(None, None)] * (2 * n_coef)
    bounds[n_coef - 1] = (0, None)
    bounds[2 * n_coef - 1] = (0, None)
    res = linprog(
        c=np.zeros(2 * n_coef),
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=np.array([1.0]),
        bounds=bounds,
        method="highs",
    )
    if not res.success:
        return None
    return res.x[:n_coef], res.x[n_coef:]


def _pair_axis_roots(x_roots: np.ndarray) -> np.ndarray:
    """Replace tight real-positive root pairs by just-off-axis complex pairs.

    A strictly positive polynomial that grazes zero between guard points is
    reported by the root finder as a close real-positive pair; the graze is a
    numerical tangency, so the pair is lifted to ``m * exp(+-j theta)``.
    Genuine sign changes (unpaired or widely split roots) are rejected.
    """
    keep = []
    axis = []
    for xi in x_roots:
        if xi.real > 0 and abs(xi.imag) < 1e-6 * xi.real:
            axis.append(xi.real)
        else:
            keep.append(xi)
    if not axis:
        return np.asarray(keep, dtype=complex)
    axis.sort()
    if len(axis) % 2:
        raise InfeasibleFit(
            "fitted polynomial changes sign on the frequency axis"
        )
    for a, b in zip(axis[0::2], axis[1::2]):
        if b / a > 1.1:
            raise InfeasibleFit(
                "fitted polynomial is negative over a wide frequency band"
            )
        m = np.sqrt(a * b)
        theta = max(2.0 * (b - a) / (b + a), 1e-6)
        keep.extend([m * np.exp(1j * theta), m * np.exp(-1j * theta)])
    return np.asarray(keep, dtype=complex)


def _spectral_roots(coef_cheb: np.ndarray, domain) -> np.ndarray:
    """Left-half-plane s-roots of the factor of P(omega**2) = |p(j omega)|**2."""
    c = np.asarray(coef_cheb, dtype=float)
    tol = 1e-10 * np.max(np.abs(c))
    while c.size > 1 and abs(c[-1]) < tol:
        c = c[:-1]
    if c.size == 1:
        return np.zeros(0, dtype=complex)
    series = cheb.Chebyshev(c, domain=list(domain))
    x_roots = _pair_axis_roots(series.roots())
    s_roots = []
    for xi in x_roots:
        cand = np.sqrt(-xi + 0j)
        if cand.real < 1e-9 * max(abs(cand), 1.0):
            raise InfeasibleFit(
                "fitted polynomial is not strictly positive on the frequency axis"
            )
        s_root = -cand
        # Keep a minimal stability margin for roots grazing the axis.
        margin = 1e-6 * abs(s_root)
        if s_root.real > -margin:
            s_root = complex(-margin, s_root.imag)
        s_roots.append(s_root)
    # Enforce exact conjugate symmetry so coefficients are real.
    sym = [z for z in s_roots if abs(z.imag) <= 1e-9 * abs(z)]
    upper = [z for z in s_roots if z.imag > 1e-9 * abs(z)]
    sym = [complex(z.real, 0.0) for z in sym]
    for z in upper:
        sym.extend([z, z.conjugate()])
    if len(sym) != len(s_roots):
        # Unpaired lower-half roots only arise from asymmetric rounding.
        sym = s_roots
    return np.asarray(sym, dtype=complex)


def _poly_from_roots(roots: np.ndarray) -> np.ndarray:
    p = np.atleast_1d(np.poly(roots)) if roots.size else np.array([1.0])
    return np.real(p)


def _factorize(p_cheb, q_cheb, domain, omegas, targets, floor, order):
    roots_p = _spectral_roots(p_cheb, domain)
    roots_q = _spectral_roots(q_cheb, domain)
    # Pad the shorter factor with fast far poles/zeros to keep the fit
    # biproper; the magnitude perturbation on the grid is O(1e-6).
    w_far = -np.sqrt(domain[1]) * 1e3
    while roots_p.size < roots_q.size:
        roots_p = np.append(roots_p, w_far)
    while roots_q.size < roots_p.size:
        roots_q = np.append(roots_q, w_far)
    num = _poly_from_roots(roots_p)
    den = _poly_from_roots(roots_q)
    jw = 1j * omegas
    mag_ratio = np.abs(np.polyval(num, jw)) / np.abs(np.polyval(den, jw))
    x = omegas**2
    v = _cheb_design(x, len(p_cheb) - 1, domain)
    want = np.sqrt((v @ p_cheb) / (v @ q_cheb))
    gain = float(np.exp(np.mean(np.log(want) - np.log(mag_ratio))))
    num = num * gain
    mags = mag_ratio * gain
    if floor is not None:
        # Restore the hard overbound lost to factorization roundoff.
        bump = max(float(np.max(floor / mags)), 1.0) * (1.0 + 1e-9)
        num *= bump
        mags *= bump
    model = from_tf(num, den)
    excess = float(np.max(np.abs(np.log10(mags) - np.log10(targets))))
    return MagnitudeFit(model=model, order=order, excess_log10=excess, magnitudes=mags)


def fit_magnitude(
    omegas: np.ndarray,
    targets: np.ndarray,
    order: int,
    floor: np.ndarray | None = None,
    log_tol: float = 1e-6,
    max_excess: float = 1e6,
) -> MagnitudeFit:
    """Fit ``|w(j omega_k)|`` to ``targets`` in the minimax log sense.

    When ``floor`` is given, ``|w(j omega_k)| >= floor_k`` is enforced as a
    hard constraint at every grid point (overbounding mode).  The returned
    model is stable, minimum phase, and biproper.

    Raises :class:`InfeasibleFit` when no fit of the requested order exists
    within a ``max_excess`` magnitude-ratio band.
    """
    omegas = np.asarray(omegas, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if np.any(targets <= 0):
        raise InfeasibleFit("targets must be strictly positive")
    if order < 0:
        raise ValueError("order must be nonnegative")
    x = omegas**2
    domain = (0.0, x[-1] * 2.0)
    # Dense guard grid: a degree-n polynomial cannot dip negative between
    # points this closely spaced without violating the band somewhere.
    x_ext = np.concatenate([[0.0], np.geomspace(x[0] / 100.0, x[-1] * 100.0, 1500)])
    v_samp = _cheb_design(x, order, domain)
    v_ext = _cheb_design(x_ext, order, domain)
    mid_row = _cheb_design(np.array([np.sqrt(x[0] * x[-1])]), order, domain)[0]
    t2 = targets**2
    lo_hard = floor**2 if floor is not None else None
    # Log-interpolated sample target for each guard point, clamped at edges.
    t2_ext = np.exp(
        np.interp(np.log(np.maximum(x_ext, x[0] / 200.0)), np.log(x), np.log(t2))
    )
    q_floor = 1e-9

    def solve_at(eta: float):
        upper = eta * t2
        lower = lo_hard if lo_hard is not None else t2 / eta
        return _solve_band_lp(
            v_samp,
            v_ext,
            upper,
            lower,
            t2_ext * _EXT_SLACK * eta,
            t2_ext / (_EXT_SLACK * eta),
            q_floor,
            mid_row,
        )

    eta_lo, eta_hi = 1.0, 1.0
    sol = solve_at(eta_hi)
    while sol is None:
        eta_lo = eta_hi
        eta_hi *= 4.0
        if eta_hi > max_excess:
            raise InfeasibleFit(
                f"no order-{order} fit within a x{max_excess:g} magnitude band"
            )
        sol = solve_at(eta_hi)
    if eta_hi > 1.0:
        while np.log(eta_hi / eta_lo) > log_tol:
            eta_mid = np.sqrt(eta_lo * eta_hi)
            sol_mid = solve_at(eta_mid)
            if sol_mid is None:
                eta_lo = eta_mid
            else:
                eta_hi, sol = eta_mid, sol_mid

    # Spectral factorization can reject a degenerate LP vertex whose
    # polynomials graze zero between guard points; retry at slightly
    # relaxed bands (deterministic ladder).
    last_exc = None
    for relax in (1.0, 1.05, 1.2, 2.0):
        cand = sol if relax == 1.0 else solve_at(eta_hi * relax)
        if cand is None:
            continue
        try:
            return _factorize(cand[0], cand[1], domain, omegas, targets, floor, order)
        except InfeasibleFit as exc:
            last_exc = exc
    raise InfeasibleFit(
        f"order-{order} fit factorization failed after retries"
    ) from last_exc


def magnitude_on_grid(model: StateSpaceModel, omegas: np.ndarray) -> np.ndarray:
    """|w(j omega)| for a SISO model on an array of frequencies."""
    return np.array([abs(response_at(model, w)[0, 0]) for w in omegas])
