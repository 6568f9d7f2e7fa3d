"""Structured singular value upper bounds for the two-full-block structure.

For one square uncertainty block plus one full performance block the
commuting scalings are ``D = diag(d*I, I)`` with scalar ``d > 0``, so the
upper-bound minimization reduces to a scalar search in ``log d`` at each
frequency.  Also provides the rational ``d(s)`` fit used to absorb the
scalings into the plant between iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch, NonInvertibleScale
from .magfit import fit_magnitude
from .sslib import (
    FrequencyGrid,
    FrequencyResponseSet,
    GeneralizedPlant,
    StateSpaceModel,
    block_diag,
    identity,
    inverse_biproper,
    scalar_times_identity,
    series,
)

_D_LO = 1e-6
_D_HI = 1e6


@dataclass(frozen=True)
class BlockStructure:
    """Dimensions of the uncertainty block and the performance block."""

    delta_rows: int
    delta_cols: int
    perf_rows: int
    perf_cols: int

    def __post_init__(self):
        if min(self.delta_rows, self.delta_cols, self.perf_rows, self.perf_cols) <= 0:
            raise DimensionMismatch("block dimensions must be positive")
        if self.delta_rows != self.delta_cols:
            raise DimensionMismatch("uncertainty block must be square")


def blocks_for_plant(plant: GeneralizedPlant) -> BlockStructure:
    """Two-block structure induced by a generalized plant's partition."""
    d = plant.dims
    return BlockStructure(
        delta_rows=d.n_delta_in,
        delta_cols=d.n_delta_out,
        perf_rows=d.n_w,
        perf_cols=d.n_z,
    )


@dataclass(frozen=True)
class SSVReport:
    """Per-frequency structured-singular-value upper bound and scaling."""

    grid: FrequencyGrid
    mu_upper: np.ndarray
    d_opt: np.ndarray
    peak_omega: float
    peak_mu: float
    edge_flags: np.ndarray = field(default=None)

    def to_rows(self):
        for w, mu, d in zip(self.grid.omegas, self.mu_upper, self.d_opt):
            yield float(w), float(mu), float(d)


def _scaled_sigma(n11, n12, n21, n22, d: float) -> float:
    top = np.hstack([n11, d * n12])
    bot = np.hstack([n21 / d, n22])
    return float(np.linalg.svd(np.vstack([top, bot]), compute_uv=False)[0])


def mu_upper_two_blocks(
    n_resp: FrequencyResponseSet, blocks: BlockStructure, log_tol: float = 1e-6
) -> SSVReport:
    """Minimize ``sigma_max(diag(d I, I) N diag(d^-1 I, I))`` over ``d``.

    A 25-point coarse log grid seeds a golden-section search on ``log d``;
    solutions clamped at the search interval edges are flagged.
    """
    # N maps (w_delta, w) -> (z_delta, z); Delta consumes z_delta (its columns)
    # and produces w_delta (its rows), dually for the performance block.
    n_rows = blocks.delta_cols + blocks.perf_cols
    n_cols = blocks.delta_rows + blocks.perf_rows
    if n_resp.n_outputs != n_rows or n_resp.n_inputs != n_cols:
        raise DimensionMismatch(
            f"N is {n_resp.n_outputs}x{n_resp.n_inputs}, blocks require {n_rows}x{n_cols}"
        )
    r, c = blocks.delta_cols, blocks.delta_rows
    n_freq = len(n_resp.grid)
    mu = np.empty(n_freq)
    d_opt = np.empty(n_freq)
    edges = np.zeros(n_freq, dtype=bool)
    log_lo, log_hi = np.log10(_D_LO), np.log10(_D_HI)
    coarse = np.linspace(log_lo, log_hi, 25)
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    for k in range(n_freq):
        m = n_resp.values[k]
        n11, n12 = m[:r, :c], m[:r, c:]
        n21, n22 = m[r:, :c], m[r:, c:]

        def cost(ld):
            return _scaled_sigma(n11, n12, n21, n22, 10.0**ld)

        vals = [cost(ld) for ld in coarse]
        j = int(np.argmin(vals))
        if j in (0, len(coarse) - 1):
            edges[k] = True
        a = coarse[max(j - 1, 0)]
        b = coarse[min(j + 1, len(coarse) - 1)]
        x1 = b - invphi * (b - a)
        x2 = a + invphi * (b - a)
        f1, f2 = cost(x1), cost(x2)
        while (b - a) > log_tol:
            if f1 > f2:
                a, x1, f1 = x1, x2, f2
                x2 = a + invphi * (b - a)
                f2 = cost(x2)
            else:
                b, x2, f2 = x2, x1, f1
                x1 = b - invphi * (b - a)
                f1 = cost(x1)
        cands = [(a, cost(a)), (x1, f1), (x2, f2), (b, cost(b)), (coarse[j], vals[j])]
        ld_best, mu_best = min(cands, key=lambda t: t[1])
        mu[k] = mu_best
        d_opt[k] = 10.0**ld_best
    kp = int(np.argmax(mu))
    return SSVReport(
        grid=n_resp.grid,
        mu_upper=mu,
        d_opt=d_opt,
        peak_omega=float(n_resp.grid.omegas[kp]),
        peak_mu=float(mu[kp]),
        edge_flags=edges,
    )


def rp_check(report: SSVReport, threshold: float = 1.0) -> bool:
    """Grid-certified robust performance: mu upper bound below threshold everywhere."""
    return bool(np.all(report.mu_upper < threshold))


def fit_dscale(
    d_samples: np.ndarray, grid: FrequencyGrid, order: int
) -> StateSpaceModel:
    """Fit a stable minimum-phase biproper ``d(s)`` to positive scaling samples.

    Uses the same minimax log-magnitude machinery as the uncertainty weight
    fit, without an overbound constraint.
    """
    d_samples = np.asarray(d_samples, dtype=float)
    if np.any(d_samples <= 0):
        raise ValueError("d-scale samples must be positive")
    fit = fit_magnitude(grid.omegas, d_samples, order)
    return fit.model


def scale_plant(plant: GeneralizedPlant, d: StateSpaceModel) -> GeneralizedPlant:
    """Absorb ``diag(d I, I) N diag(d^-1 I, I)`` scalings into the plant.

    Left-multiplies the uncertainty output channel by ``d(s) I`` and
    right-multiplies the uncertainty input channel by ``d(s)^{-1} I``; all
    other channels pass through unchanged.
    """
    if d.n_inputs != 1 or d.n_outputs != 1:
        raise DimensionMismatch("d-scale must be SISO")
    if d.d[0, 0] == 0.0:
        raise NonInvertibleScale("d-scale has zero feedthrough")
    dims = plant.dims
    nd_out, nd_in = dims.n_delta_out, dims.n_delta_in
    left = block_diag(
        [
            scalar_times_identity(d, nd_out),
            identity(dims.n_z + dims.n_meas),
        ]
    )
    right = block_diag(
        [
            scalar_times_identity(inverse_biproper(d), nd_in),
            identity(dims.n_w + dims.n_ctl),
        ]
    )
    scaled = series(right, series(plant.sys, left))
    return GeneralizedPlant(sys=scaled, dims=dims)
