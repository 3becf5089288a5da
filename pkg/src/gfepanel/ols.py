"""Conditional least-squares update: (theta, alpha, mu) given a grouping.

The design has one indicator per non-empty (group, period) cell (these
absorb the intercept), location indicators with a reference location
dropped, and the covariates.  The system is solved by partitioning on the
cell indicators: their block of the normal equations is diagonal, so the
remaining coefficients come from a small Schur-complement solve and the
cell effects from within-cell means of the partial residuals.

When the design is rank deficient (e.g. a covariate collinear with the
dummies) the update falls back to a dense SVD solve, returning the
minimum-norm solution with ``rank_deficient=True``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import UndefinedAlphaError
from .panel import (
    GroupAssignment,
    ModelParams,
    PanelDataset,
    base_residuals,
    require_observations,
)


@dataclass(frozen=True)
class DesignSpec:
    """Shape of the regression design used by the update step."""

    n_groups: int
    include_covariates: bool = True
    reference_location: int = 0


class DesignCache:
    """Gamma-independent pieces of the normal equations for one dataset.

    Safe to reuse across every update during a search, since the observed
    cells, covariates and locations never change; only the cell indicators
    (which depend on the grouping) are rebuilt per call.
    """

    def __init__(self, data: PanelDataset, spec: DesignSpec):
        require_observations(data)
        obs = data.observed()
        self.n_obs = len(obs.y)
        self.period_idx = obs.period_idx
        self.loc = obs.loc
        self.y = obs.y
        L = data.n_locations
        ref = spec.reference_location
        if not 0 <= ref < L:
            raise ValueError("reference_location out of range")
        self.keep_locs = np.array([l for l in range(L) if l != ref], dtype=np.intp)
        loc_dummies = np.zeros((self.n_obs, L - 1))
        for j, l in enumerate(self.keep_locs):
            loc_dummies[:, j] = obs.loc == l
        x = obs.x if (spec.include_covariates and data.n_covariates) else np.empty((self.n_obs, 0))
        self.k = x.shape[1]
        self.w_mat = np.hstack([loc_dummies, x])      # (n_obs, M)
        self.m = self.w_mat.shape[1]
        self.wtw = self.w_mat.T @ self.w_mat
        self.wty = self.w_mat.T @ self.y
        self.n_locations = L
        self.n_periods = data.n_periods
        self.spec = spec


def _cell_sums(cache: DesignCache, cell: np.ndarray, n_cells: int):
    """Per-cell counts and sums of y and of the W columns."""
    counts = np.bincount(cell, minlength=n_cells)
    aty = np.bincount(cell, weights=cache.y, minlength=n_cells)
    atw = np.empty((n_cells, cache.m))
    for j in range(cache.m):
        atw[:, j] = np.bincount(cell, weights=cache.w_mat[:, j], minlength=n_cells)
    return counts, aty, atw


def ols_update(
    data: PanelDataset,
    gamma: GroupAssignment,
    spec: DesignSpec,
    cache: DesignCache | None = None,
) -> ModelParams:
    """Least-squares minimizer of the masked objective given ``gamma``.

    Group-period cells with no observed members get NaN (undefined)
    effects and are excluded from the design.
    """
    if cache is None:
        cache = DesignCache(data, spec)
    G, T = spec.n_groups, cache.n_periods
    cell = gamma.g[data.observed().unit_idx] * T + cache.period_idx
    counts, aty, atw = _cell_sums(cache, cell, G * T)
    defined = counts > 0
    cnt = counts[defined].astype(float)
    aty_d = aty[defined]
    atw_d = atw[defined]

    # Schur complement on the W block: S b = r with cell effects eliminated.
    schur = cache.wtw - atw_d.T @ (atw_d / cnt[:, None])
    rhs = cache.wty - atw_d.T @ (aty_d / cnt)

    rank_deficient = False
    if cache.m:
        try:
            c, low = scipy.linalg.cho_factor(schur, check_finite=False)
            b_w = scipy.linalg.cho_solve((c, low), rhs, check_finite=False)
        except scipy.linalg.LinAlgError:
            rank_deficient = True
            b_w, alpha_d = _min_norm_solve(cache, cell, defined)
    else:
        b_w = np.empty(0)
    if not rank_deficient:
        alpha_d = (aty_d - atw_d @ b_w) / cnt

    alpha = np.full(G * T, np.nan)
    alpha[defined] = alpha_d
    mu = np.zeros(cache.n_locations)
    mu[cache.keep_locs] = b_w[: cache.n_locations - 1]
    theta = b_w[cache.n_locations - 1:]
    return ModelParams(
        theta=theta,
        alpha=alpha.reshape(G, T),
        mu=mu,
        reference_location=spec.reference_location,
        rank_deficient=rank_deficient,
    )


def _min_norm_solve(cache: DesignCache, cell, defined):
    """Dense minimum-norm fallback for rank-deficient designs."""
    cell_ids = np.nonzero(defined)[0]
    col_of = {c: j for j, c in enumerate(cell_ids)}
    a = np.zeros((cache.n_obs, len(cell_ids)))
    a[np.arange(cache.n_obs), [col_of[c] for c in cell]] = 1.0
    full = np.hstack([a, cache.w_mat])
    coef, *_ = np.linalg.lstsq(full, cache.y, rcond=None)
    return coef[len(cell_ids):], coef[: len(cell_ids)]


def residuals(data: PanelDataset, params: ModelParams, gamma: GroupAssignment) -> np.ndarray:
    """Residual r(i,t) on the full grid; NaN at unobserved cells.

    Raises
    ------
    UndefinedAlphaError
        If an observed cell maps to an undefined group-time effect.
    """
    r0 = base_residuals(data, params)
    alpha_rows = params.alpha[gamma.g]
    if (data.mask & np.isnan(alpha_rows)).any():
        raise UndefinedAlphaError("observed cell with undefined group-time effect")
    out = np.where(data.mask, r0 - alpha_rows, np.nan)
    return out
