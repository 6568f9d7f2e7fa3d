"""DK-iteration: alternate H-infinity synthesis on the D-scaled plant with
per-frequency structured-singular-value analysis and rational D(s) refits.

Analysis is always performed on the unscaled closed loop; the scaling only
enters the synthesis step.  Non-convergence is a normal outcome: the trace
keeps every iteration and falls back to the best iterate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import FleetobsError
from .magfit import magnitude_on_grid
from .sslib import FrequencyGrid, GeneralizedPlant, StateSpaceModel, freq_response, lft_lower
from .ssv import (
    BlockStructure,
    SSVReport,
    fit_dscale,
    mu_upper_two_blocks,
    rp_check,
    scale_plant,
)
from .synthesis import SynthesisResult, hinf_synthesize


@dataclass(frozen=True)
class DKConfig:
    """Grid, iteration budget, fit order, and synthesis bracket."""

    grid: FrequencyGrid
    max_iters: int = 4
    d_fit_order: int = 8
    stop_mu: float = 1.0
    gamma_min: float = 1e-3
    gamma_max: float = 1e3
    gamma_tol: float = 1e-3

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.d_fit_order < 0:
            raise ValueError("d_fit_order must be >= 0")
        if self.stop_mu <= 0:
            raise ValueError("stop_mu must be positive")


@dataclass(frozen=True)
class DKIteration:
    """One synthesis / analysis step of the alternation."""

    index: int
    synthesis: SynthesisResult
    ssv: SSVReport
    d_fit_error_log10: float | None  # None when no refit followed


@dataclass(frozen=True)
class DKTrace:
    """Full iteration history plus the selected controller."""

    iterations: tuple[DKIteration, ...]
    final: SynthesisResult
    final_ssv: SSVReport
    converged: bool


class DKStageError(FleetobsError):
    """Synthesis or analysis failed inside an iteration."""

    def __init__(self, iteration: int, cause: Exception):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"DK iteration {iteration} failed: {cause}")


def dk_iterate(
    plant: GeneralizedPlant, blocks: BlockStructure, cfg: DKConfig
) -> DKTrace:
    """Run the alternation until robust performance or the iteration budget.

    Each iteration synthesizes on the currently scaled plant, evaluates the
    mu upper bound of the unscaled closed loop on the grid, and refits the
    optimal scalings into a stable minimum-phase ``d(s)``.
    """
    scaled = plant
    iterations: list[DKIteration] = []
    for it in range(1, cfg.max_iters + 1):
        try:
            res = hinf_synthesize(scaled, cfg.gamma_min, cfg.gamma_max, cfg.gamma_tol)
            n_resp = freq_response(lft_lower(plant, res.controller), cfg.grid)
            report = mu_upper_two_blocks(n_resp, blocks)
        except FleetobsError as exc:
            if not iterations:
                raise DKStageError(it, exc) from exc
            break  # keep the completed iterations, fall back to the best
        if rp_check(report, cfg.stop_mu):
            iterations.append(
                DKIteration(index=it, synthesis=res, ssv=report, d_fit_error_log10=None)
            )
            return DKTrace(
                iterations=tuple(iterations),
                final=res,
                final_ssv=report,
                converged=True,
            )
        d_fit_error = None
        if it < cfg.max_iters:
            try:
                d_model = fit_dscale(report.d_opt, cfg.grid, cfg.d_fit_order)
            except FleetobsError as exc:
                raise DKStageError(it, exc) from exc
            mags = magnitude_on_grid(d_model, cfg.grid.omegas)
            d_fit_error = float(
                np.max(np.abs(np.log10(mags) - np.log10(report.d_opt)))
            )
            scaled = scale_plant(plant, d_model)
        iterations.append(
            DKIteration(
                index=it, synthesis=res, ssv=report, d_fit_error_log10=d_fit_error
            )
        )
    best = min(iterations, key=lambda i: i.ssv.peak_mu)
    return DKTrace(
        iterations=tuple(iterations),
        final=best.synthesis,
        final_ssv=best.ssv,
        converged=False,
    )
