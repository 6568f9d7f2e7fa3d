"""Population variation characterization in the frequency domain.

Extracts inverse input multiplicative residuals of each population member
against the nominal model, forms the worst-case singular-value envelope, and
fits a scalar overbounding uncertainty weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    GridMismatch,
    NonPositiveEnvelope,
    RankDeficientNominal,
    SingularRatio,
)
from .magfit import fit_magnitude, magnitude_on_grid
from .sslib import FrequencyGrid, FrequencyResponseSet, StateSpaceModel, freq_response

ENVELOPE_FLOOR = 1e-8


@dataclass(frozen=True)
class PopulationModel:
    """Nominal model, member models, and the shared measurement matrix."""

    nominal: StateSpaceModel
    members: list[StateSpaceModel]
    measurement: np.ndarray
    labels: list[str]

    def __post_init__(self):
        if not self.members:
            raise ValueError("population needs at least one member")
        c = np.atleast_2d(np.asarray(self.measurement, dtype=float))
        if c.shape[1] != self.nominal.n_outputs:
            raise ValueError(
                f"measurement matrix has {c.shape[1]} columns, expected {self.nominal.n_outputs}"
            )
        for i, m in enumerate(self.members):
            if (m.n_inputs, m.n_outputs) != (
                self.nominal.n_inputs,
                self.nominal.n_outputs,
            ):
                raise ValueError(f"member {i} dimensions differ from nominal")
        if len(self.labels) != len(self.members):
            raise ValueError("one label per member required")
        object.__setattr__(self, "measurement", c)


@dataclass(frozen=True)
class ResidualEnvelope:
    """Per-member residual gains and their pointwise maximum."""

    grid: FrequencyGrid
    per_member: np.ndarray  # (n_members, n_freq)
    envelope: np.ndarray  # (n_freq,)


@dataclass(frozen=True)
class UncertaintyWeight:
    """Scalar overbounding weight applied as ``w(s) * I``."""

    w: StateSpaceModel
    order: int
    margin_db: np.ndarray  # 20*log10(|w| / envelope) per grid point


def residual_response(
    nominal_resp: np.ndarray, member_resp: np.ndarray, omega: float
) -> np.ndarray:
    """Inverse input multiplicative residual at one frequency.

    ``E = I - (G0^+ Gi)^{-1}`` with the Moore-Penrose pseudo-inverse; exact
    whenever the member lies in the model set ``G0 (I - E)^{-1}``.
    """
    nu = nominal_resp.shape[1]
    rank = np.linalg.matrix_rank(
        nominal_resp, tol=1e-10 * max(1.0, np.linalg.norm(nominal_resp, 2))
    )
    if rank < nu:
        raise RankDeficientNominal(omega)
    ratio = np.linalg.pinv(nominal_resp) @ member_resp
    if np.linalg.cond(ratio) > 1e12:
        raise SingularRatio(omega)
    return np.eye(nu) - np.linalg.inv(ratio)


def compute_residuals(
    pop: PopulationModel, grid: FrequencyGrid
) -> list[FrequencyResponseSet]:
    """Residual response set ``E_i(j omega)`` for every member."""
    nom = freq_response(pop.nominal, grid)
    out = []
    for member in pop.members:
        mem = freq_response(member, grid)
        vals = np.empty((len(grid), pop.nominal.n_inputs, pop.nominal.n_inputs), complex)
        for k, w in enumerate(grid.omegas):
            vals[k] = residual_response(nom.values[k], mem.values[k], w)
        out.append(FrequencyResponseSet(grid=grid, values=vals))
    return out


def envelope(residuals: list[FrequencyResponseSet]) -> ResidualEnvelope:
    """Pointwise maximum of the residual gains across members."""
    if not residuals:
        raise ValueError("no residual sets given")
    grid = residuals[0].grid
    for r in residuals[1:]:
        if not np.array_equal(r.grid.omegas, grid.omegas):
            raise GridMismatch("residual sets are on different grids")
    per_member = np.vstack([r.sigma_max() for r in residuals])
    return ResidualEnvelope(
        grid=grid, per_member=per_member, envelope=per_member.max(axis=0)
    )


def fit_overbound_weight(
    env: ResidualEnvelope, order: int, headroom: float = 1.0, rel_floor: float = 1e-3
) -> UncertaintyWeight:
    """Fit a stable minimum-phase ``w(s)`` with ``|w| >= headroom * envelope``.

    The maximum log-magnitude excess over the clipped envelope is minimized
    subject to the hard overbound at every grid point.  ``rel_floor`` lifts
    the fit target to a fraction of the envelope peak so that a low-order fit
    is not forced to chase frequencies where the residuals are negligible;
    the overbound of the true envelope is preserved (conservatively).
    """
    if headroom < 1.0:
        raise ValueError("headroom must be >= 1")
    if order < 1:
        raise ValueError("weight order must be >= 1")
    if np.all(env.envelope <= 0):
        raise NonPositiveEnvelope("residual envelope is identically nonpositive")
    floor_val = max(ENVELOPE_FLOOR, rel_floor * float(np.max(env.envelope)))
    target = headroom * np.maximum(env.envelope, floor_val)
    fit = fit_magnitude(env.grid.omegas, target, order, floor=target)
    margin_db = 20.0 * (
        np.log10(fit.magnitudes) - np.log10(np.maximum(env.envelope, ENVELOPE_FLOOR))
    )
    return UncertaintyWeight(w=fit.model, order=order, margin_db=margin_db)


def weight_magnitudes(weight: UncertaintyWeight, grid: FrequencyGrid) -> np.ndarray:
    """|w(j omega)| on a grid."""
    return magnitude_on_grid(weight.w, grid.omegas)
