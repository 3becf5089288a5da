"""Data model for unbalanced rotating panels and the masked least-squares objective.

A panel holds N units observed over T calendar periods, with an observation
mask d(i,t) marking the cells where the outcome, covariates, weight and
poverty line are all present.  Every estimation and evaluation routine in
this package sums only over masked-in cells; values stored at masked-out
cells are meaningless and must never be read.

Group labels and location indices are 0-based internally.  File exports
use 1-based group labels (see :mod:`gfepanel.io`).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    NoObservationsError,
    PanelValidationError,
    UndefinedAlphaError,
)


class Violation(NamedTuple):
    """One broken validation rule, located by unit and (optionally) period."""

    rule: str
    unit: object
    period: object
    detail: str


class _ObsView(NamedTuple):
    """Flat view of the observed cells, shared by the solvers."""

    unit_idx: np.ndarray      # (n_obs,) row index into the panel
    period_idx: np.ndarray    # (n_obs,) column index into the panel
    y: np.ndarray             # (n_obs,)
    x: np.ndarray             # (n_obs, K)
    loc: np.ndarray           # (n_obs,) location index of the unit


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PanelDataset:
    """Unbalanced unit-by-period panel with an observation mask.

    Parameters
    ----------
    unit_ids : sequence
        N unit identifiers (opaque strings or ints), in row order.
    period_ids : array of int, shape (T,)
        Calendar periods (e.g. years), in column order.  They need not be
        contiguous; all internal indexing is positional.
    locations : array of int, shape (N,)
        Per-unit location index in {0..L-1}.
    outcome : array, shape (N, T)
        Welfare measure y(i,t), valid only where ``mask`` is True.
    covariates : array, shape (N, T, K)
        Covariate vectors x(i,t), valid only where ``mask`` is True.
    mask : bool array, shape (N, T)
        d(i,t): True iff the cell is observed with complete data.
    weight : array, shape (N, T)
        Survey expansion factors, valid where observed.
    poverty_line : array, shape (N, T)
        Poverty threshold on the same scale as ``outcome``, valid where
        observed.  A year-constant line is the special case of equal
        values down each column.
    """

    unit_ids: tuple
    period_ids: np.ndarray
    locations: np.ndarray
    outcome: np.ndarray
    covariates: np.ndarray
    mask: np.ndarray
    weight: np.ndarray
    poverty_line: np.ndarray
    n_locations: int = 0
    covariate_names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))
        object.__setattr__(self, "period_ids", _readonly(np.asarray(self.period_ids)))
        object.__setattr__(self, "locations", _readonly(np.asarray(self.locations, dtype=np.intp)))
        object.__setattr__(self, "outcome", _readonly(np.asarray(self.outcome, dtype=float)))
        object.__setattr__(self, "covariates", _readonly(np.asarray(self.covariates, dtype=float)))
        object.__setattr__(self, "mask", _readonly(np.asarray(self.mask, dtype=bool)))
        object.__setattr__(self, "weight", _readonly(np.asarray(self.weight, dtype=float)))
        object.__setattr__(self, "poverty_line", _readonly(np.asarray(self.poverty_line, dtype=float)))
        if self.n_locations == 0:
            object.__setattr__(self, "n_locations", int(self.locations.max()) + 1 if self.locations.size else 1)
        if not self.covariate_names:
            object.__setattr__(
                self, "covariate_names", tuple(f"x{k + 1}" for k in range(self.n_covariates))
            )
        object.__setattr__(self, "_obs_cache", None)

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def n_periods(self) -> int:
        return len(self.period_ids)

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[2]

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    def observed(self) -> _ObsView:
        """Flattened arrays over the observed cells (cached)."""
        cached = getattr(self, "_obs_cache")
        if cached is None:
            iu, it = np.nonzero(self.mask)
            cached = _ObsView(
                unit_idx=iu,
                period_idx=it,
                y=self.outcome[iu, it],
                x=self.covariates[iu, it, :],
                loc=self.locations[iu],
            )
            object.__setattr__(self, "_obs_cache", cached)
        return cached

    def with_mask(self, new_mask: np.ndarray) -> "PanelDataset":
        """Same panel restricted to a sub-mask (used for holdout training)."""
        new_mask = np.asarray(new_mask, dtype=bool)
        if not np.all(new_mask <= self.mask):
            raise ValueError("new mask must be a subset of the current mask")
        return replace(self, mask=new_mask)


@dataclass(frozen=True)
class ModelParams:
    """Fitted model parameters.

    ``alpha`` is a G x T matrix of group-time effects; cells that had no
    supporting observations at the last update are NaN and flagged as
    undefined in :attr:`alpha_defined`.  ``mu`` is normalized so that the
    reference location's effect is exactly zero.
    """

    theta: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray
    reference_location: int = 0
    rank_deficient: bool = False

    def __post_init__(self):
        object.__setattr__(self, "theta", _readonly(np.asarray(self.theta, dtype=float)))
        object.__setattr__(self, "alpha", _readonly(np.asarray(self.alpha, dtype=float)))
        object.__setattr__(self, "mu", _readonly(np.asarray(self.mu, dtype=float)))
        if self.mu[self.reference_location] != 0.0:
            raise ValueError("reference location effect must be exactly zero")

    @property
    def alpha_defined(self) -> np.ndarray:
        return ~np.isnan(self.alpha)

    @property
    def n_groups(self) -> int:
        return self.alpha.shape[0]

    def permute_groups(self, perm: Sequence[int]) -> "ModelParams":
        """Relabel groups: new row g is old row perm[g]."""
        perm = np.asarray(perm, dtype=np.intp)
        return replace(self, alpha=self.alpha[perm])


@dataclass(frozen=True)
class GroupAssignment:
    """Partition of the N units into at most ``n_groups`` groups (0-based)."""

    g: np.ndarray
    n_groups: int

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.intp)
        if g.size and (g.min() < 0 or g.max() >= self.n_groups):
            raise ValueError("group labels out of range")
        object.__setattr__(self, "g", _readonly(g))

    def permute(self, perm: Sequence[int]) -> "GroupAssignment":
        """Relabel: a unit in old group perm[g] moves to new group g."""
        inverse = np.empty(self.n_groups, dtype=np.intp)
        inverse[np.asarray(perm, dtype=np.intp)] = np.arange(self.n_groups)
        return GroupAssignment(inverse[self.g], self.n_groups)


@dataclass(frozen=True)
class FitConfig:
    """Tuning parameters for the search.

    Defaults mirror the standard configuration: 3 starts for coarse grid
    scans (10 for reruns), 10 outer cycles, neighborhoods up to size 5,
    and 2 greedy reassignment passes inside each refinement.
    """

    n_starts: int = 3
    itermax: int = 10
    neighmax: int = 5
    max_local_iters: int = 2
    base_seed: int = 0
    sse_rel_tol: float = 1e-10

    def __post_init__(self):
        for name in ("n_starts", "itermax", "neighmax", "max_local_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.sse_rel_tol <= 0:
            raise ValueError("sse_rel_tol must be positive")


def validate_dataset(
    unit_ids,
    period_ids,
    locations,
    outcome,
    covariates,
    mask,
    weight,
    poverty_line,
    n_locations: int = 0,
    covariate_names=(),
) -> PanelDataset:
    """Build a :class:`PanelDataset`, checking every invariant.

    ``locations`` may be given per unit (shape (N,)) or per cell (shape
    (N, T), NaN where unobserved); the per-cell form is collapsed after
    checking that each unit's location never drifts across its observed
    periods.

    Raises
    ------
    PanelValidationError
        Listing every violation found (EmptyUnit, LocationDrift, NonFinite).
    """
    unit_ids = list(unit_ids)
    period_ids = np.asarray(period_ids)
    mask = np.asarray(mask, dtype=bool)
    outcome = np.asarray(outcome, dtype=float)
    covariates = np.asarray(covariates, dtype=float)
    weight = np.asarray(weight, dtype=float)
    poverty_line = np.asarray(poverty_line, dtype=float)
    locations = np.asarray(locations)

    violations: list[Violation] = []
    n, t = mask.shape

    # Collapse per-cell locations, flagging drift.
    if locations.ndim == 2:
        per_unit = np.zeros(n, dtype=np.intp)
        for i in range(n):
            obs_t = np.nonzero(mask[i])[0]
            vals = locations[i, obs_t]
            uniq = np.unique(vals[~np.isnan(vals.astype(float))]) if vals.size else np.array([])
            if uniq.size > 1:
                violations.append(
                    Violation(
                        "LocationDrift",
                        unit_ids[i],
                        tuple(period_ids[obs_t]),
                        f"location takes values {uniq.tolist()} across observed periods",
                    )
                )
            per_unit[i] = int(uniq[0]) if uniq.size else 0
        locations = per_unit
    else:
        locations = locations.astype(np.intp)

    obs_per_unit = mask.sum(axis=1)
    for i in np.nonzero(obs_per_unit == 0)[0]:
        violations.append(
            Violation("EmptyUnit", unit_ids[i], None, "no observed period")
        )

    # Finite values at observed cells only.
    iu, it = np.nonzero(mask)
    checks = [
        ("outcome", outcome[iu, it]),
        ("weight", weight[iu, it]),
        ("poverty_line", poverty_line[iu, it]),
    ]
    if covariates.shape[2]:
        checks.append(("covariates", covariates[iu, it, :].reshape(len(iu), -1)))
    for name, vals in checks:
        bad = ~np.isfinite(vals)
        bad_rows = np.nonzero(bad.any(axis=1))[0] if vals.ndim == 2 else np.nonzero(bad)[0]
        for r in bad_rows:
            violations.append(
                Violation(
                    "NonFinite",
                    unit_ids[iu[r]],
                    period_ids[it[r]],
                    f"non-finite {name} at observed cell",
                )
            )

    if np.any(weight[iu, it] < 0):
        for r in np.nonzero(weight[iu, it] < 0)[0]:
            violations.append(
                Violation("NonFinite", unit_ids[iu[r]], period_ids[it[r]], "negative weight")
            )

    if violations:
        raise PanelValidationError(violations)

    return PanelDataset(
        unit_ids=unit_ids,
        period_ids=period_ids,
        locations=locations,
        outcome=outcome,
        covariates=covariates,
        mask=mask,
        weight=weight,
        poverty_line=poverty_line,
        n_locations=n_locations,
        covariate_names=tuple(covariate_names),
    )


def base_residuals(data: PanelDataset, params: ModelParams) -> np.ndarray:
    """y - x'theta - mu over the full grid (group effect not subtracted).

    Entries at unobserved cells are computed from whatever is stored there
    and must be ignored via the mask.
    """
    xb = data.covariates @ params.theta if data.n_covariates else 0.0
    return data.outcome - xb - params.mu[data.locations][:, None]


def objective(data: PanelDataset, params: ModelParams, gamma: GroupAssignment) -> float:
    """Masked sum of squared residuals (unweighted).

    Raises
    ------
    UndefinedAlphaError
        If any observed cell maps to an undefined group-time effect.
    """
    r0 = base_residuals(data, params)
    alpha_rows = params.alpha[gamma.g]            # (N, T)
    bad = data.mask & np.isnan(alpha_rows)
    if bad.any():
        iu, it = np.nonzero(bad)
        raise UndefinedAlphaError(
            f"undefined group-time effect at observed cells, e.g. unit "
            f"{data.unit_ids[iu[0]]!r} period {data.period_ids[it[0]]!r}"
        )
    resid = np.where(data.mask, r0 - alpha_rows, 0.0)
    return float(np.sum(resid * resid))


def require_observations(data: PanelDataset) -> None:
    if data.n_observed == 0:
        raise NoObservationsError("panel has no observed cells")
