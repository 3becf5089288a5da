"""Choosing the number of groups: BIC on training data, RMSE on a holdout.

The holdout reserves each unit's last observed period as a test cell and
trains on everything else.  The selection protocol scans a grid with few
random starts, then reruns a shortlist of the best grid points with more
starts; the chosen group count minimizes holdout RMSE (BIC is reported
as an in-sample diagnostic, not the selector).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegreesOfFreedomExhaustedError,
    NoScorableCellsError,
    UnitObservedOnceError,
)
from .ols import DesignSpec
from .panel import FitConfig, ModelParams, PanelDataset, objective
from .search import FitResult, multi_start_fit


@dataclass(frozen=True)
class HoldoutSplit:
    """Last-observed-period split: one test cell per unit."""

    train_mask: np.ndarray            # (N, T) bool
    test_cells: tuple                 # ((unit_idx, period_idx), ...)
    t_last: np.ndarray                # (N,) period index of each unit's last obs


@dataclass(frozen=True)
class SelectionRow:
    n_groups: int
    sse_train: float
    bic: float
    rmse_test: float
    n_starts_used: int
    excluded_cells: int


@dataclass(frozen=True)
class HoldoutScore:
    rmse: float
    n_scored: int
    excluded_cells: int


def last_year_holdout(data: PanelDataset) -> HoldoutSplit:
    """Split off each unit's last observed period as its test cell.

    Raises
    ------
    UnitObservedOnceError
        Listing every unit with a single observed period; such units
        would leave an empty training row and must be filtered upstream.
    """
    obs_counts = data.mask.sum(axis=1)
    once = np.nonzero(obs_counts < 2)[0]
    if once.size:
        raise UnitObservedOnceError([data.unit_ids[i] for i in once])
    # Last observed period index per unit.
    t_idx = np.arange(data.n_periods)
    t_last = np.where(data.mask, t_idx[None, :], -1).max(axis=1)
    train = data.mask.copy()
    train[np.arange(data.n_units), t_last] = False
    cells = tuple((int(i), int(t_last[i])) for i in range(data.n_units))
    return HoldoutSplit(train_mask=train, test_cells=cells, t_last=t_last)


def effective_parameter_count(
    params: ModelParams, n_units: int, n_covariates: int, n_locations: int
) -> int:
    """G*T + N + K + L, where T counts periods with any defined group effect."""
    t_eff = int(params.alpha_defined.any(axis=0).sum())
    return params.n_groups * t_eff + n_units + n_covariates + n_locations


def bic(fit: FitResult, data: PanelDataset, train_mask: np.ndarray) -> float:
    """SSE/NT + sigma^2 * p/NT * ln(NT) over the training cells.

    sigma^2 = SSE / (NT - p) with p the effective parameter count.

    Raises
    ------
    DegreesOfFreedomExhaustedError
        If the training cell count does not exceed p.
    """
    train = data.with_mask(np.asarray(train_mask, dtype=bool))
    sse = objective(train, fit.params, fit.gamma)
    nt = train.n_observed
    p = effective_parameter_count(fit.params, data.n_units, data.n_covariates, data.n_locations)
    if nt <= p:
        raise DegreesOfFreedomExhaustedError(f"NT_obs={nt} <= p={p}")
    sigma2 = sse / (nt - p)
    return sse / nt + sigma2 * (p / nt) * math.log(nt)


def holdout_rmse(fit: FitResult, data: PanelDataset, split: HoldoutSplit) -> HoldoutScore:
    """RMSE of the fitted prediction over scorable test cells.

    Test cells whose group-period effect is undefined in the fit (e.g.
    the final calendar period when no unit's training row reaches it)
    are excluded and counted, never imputed.
    """
    se = []
    excluded = 0
    theta = fit.params.theta
    for i, t in split.test_cells:
        g = fit.gamma.g[i]
        a = fit.params.alpha[g, t]
        if np.isnan(a):
            excluded += 1
            continue
        x = data.covariates[i, t]
        pred = (x @ theta if theta.size else 0.0) + a + fit.params.mu[data.locations[i]]
        se.append((data.outcome[i, t] - pred) ** 2)
    if not se:
        raise NoScorableCellsError("every test cell maps to an undefined group effect")
    return HoldoutScore(
        rmse=float(np.sqrt(np.mean(se))), n_scored=len(se), excluded_cells=excluded
    )


def select_g(
    data: PanelDataset,
    g_grid,
    config_coarse: FitConfig,
    config_fine: FitConfig,
    shortlist_size: int,
    reference_location: int = 0,
    n_jobs: int = 1,
) -> tuple[list[SelectionRow], int]:
    """Two-phase grid search over the number of groups.

    Phase 1 fits every grid value with the coarse configuration on the
    training mask; phase 2 refits the ``shortlist_size`` lowest-RMSE
    values with the fine configuration.  Returns all rows (coarse then
    fine) and the chosen count: the phase-2 RMSE minimizer, ties to the
    smaller value.
    """
    g_grid = list(g_grid)
    if not g_grid:
        raise ValueError("g_grid must be nonempty")
    split = last_year_holdout(data)
    train = data.with_mask(split.train_mask)

    def run(g: int, config: FitConfig) -> tuple[SelectionRow, FitResult]:
        spec = DesignSpec(n_groups=g, reference_location=reference_location)
        fit = multi_start_fit(train, spec, config, n_jobs=n_jobs)
        score = holdout_rmse(fit, data, split)
        return (
            SelectionRow(
                n_groups=g,
                sse_train=fit.sse,
                bic=bic(fit, data, split.train_mask),
                rmse_test=score.rmse,
                n_starts_used=config.n_starts,
                excluded_cells=score.excluded_cells,
            ),
            fit,
        )

    phase1 = [run(g, config_coarse)[0] for g in g_grid]
    shortlist = sorted(phase1, key=lambda r: (r.rmse_test, r.n_groups))[:shortlist_size]
    phase2 = [run(g, config_fine)[0] for g in sorted(r.n_groups for r in shortlist)]
    best = min(phase2, key=lambda r: (r.rmse_test, r.n_groups))
    return phase1 + phase2, best.n_groups
