"""Joint minimization over parameters and partition via shaking + greedy moves.

The search alternates a least-squares parameter update with greedy
single-unit reassignments, escaping local minima through random
multi-unit "shakes" of growing size.  Each random start is fully
deterministic given the configuration: the stream seed for start ``s``
is ``base_seed XOR s`` (PCG64), a rule that is part of the public
contract and stable across versions.

Empty groups are permitted at any point; the group count is an upper
bound.  A group-period cell with no members gets an undefined effect,
which makes that group infeasible for any unit observed in that period
until a shake repopulates it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NoFeasibleGroupError
from .ols import DesignCache, DesignSpec, ols_update
from .panel import (
    FitConfig,
    GroupAssignment,
    ModelParams,
    PanelDataset,
    base_residuals,
    objective,
    require_observations,
)

logger = logging.getLogger(__name__)

# Called after every refine with the stage SSE triple
# (after first update, after greedy passes, after final update).
RefineMonitor = Callable[[tuple[float, float, float]], None]


@dataclass(frozen=True)
class FitResult:
    """Best solution found by one (or the best of several) search runs."""

    params: ModelParams
    gamma: GroupAssignment
    sse: float
    n_vns_cycles: int
    n_shakes: int
    n_accepted: int
    start_index: int
    seed: int
    rank_deficient_ever: bool


@dataclass(frozen=True)
class LocalSearchResult:
    gamma: GroupAssignment
    n_passes: int
    n_moves: int


def stream_seed(base_seed: int, start_index: int) -> int:
    """Seed-mixing rule for independent starts: base_seed XOR start_index."""
    return int(base_seed) ^ int(start_index)


def _loss_matrix(data: PanelDataset, params: ModelParams) -> np.ndarray:
    """Per-unit loss of every candidate group, +inf where infeasible.

    loss_i(g) sums squared residuals over unit i's observed periods with
    group g's time path; a candidate is infeasible when its effect is
    undefined in any period the unit is observed.
    """
    r0 = np.where(data.mask, base_residuals(data, params), 0.0)  # (N, T)
    G = params.n_groups
    loss = np.empty((data.n_units, G))
    mask = data.mask
    for g in range(G):
        row = params.alpha[g]
        infeasible = (mask & np.isnan(row)[None, :]).any(axis=1)
        diff = np.where(mask, r0 - np.where(np.isnan(row), 0.0, row)[None, :], 0.0)
        loss[:, g] = np.where(infeasible, np.inf, np.einsum("nt,nt->n", diff, diff))
    return loss


def assign_groups(data: PanelDataset, params: ModelParams) -> GroupAssignment:
    """Loss-minimizing group per unit; ties broken by lowest group index.

    Raises
    ------
    NoFeasibleGroupError
        If some unit has an undefined effect under every candidate group.
    """
    loss = _loss_matrix(data, params)
    stuck = np.isinf(loss).all(axis=1)
    if stuck.any():
        raise NoFeasibleGroupError([data.unit_ids[i] for i in np.nonzero(stuck)[0]])
    return GroupAssignment(np.argmin(loss, axis=1), params.n_groups)


def local_search(
    data: PanelDataset,
    params: ModelParams,
    gamma: GroupAssignment,
    max_passes: int,
) -> LocalSearchResult:
    """Greedy single-unit reassignment sweeps holding the parameters fixed.

    Each sweep visits units in index order and moves a unit to its
    loss-minimizing group whenever that strictly lowers its loss (which,
    with fixed parameters, is exactly the change in total SSE).  Stops
    early once a sweep accepts no move, or after ``max_passes`` sweeps.
    """
    if max_passes <= 0:
        return LocalSearchResult(gamma, 0, 0)
    loss = _loss_matrix(data, params)
    g = np.array(gamma.g)
    n_moves = 0
    n_passes = 0
    for _ in range(max_passes):
        n_passes += 1
        best = np.argmin(loss, axis=1)
        improves = loss[np.arange(len(g)), best] < loss[np.arange(len(g)), g]
        if not improves.any():
            break
        g[improves] = best[improves]
        n_moves += int(improves.sum())
    return LocalSearchResult(GroupAssignment(g, gamma.n_groups), n_passes, n_moves)


@dataclass(frozen=True)
class RefineResult:
    params: ModelParams
    gamma: GroupAssignment
    sse: float
    rank_deficient: bool
    stage_sses: tuple[float, float, float]


def refine(
    data: PanelDataset,
    gamma: GroupAssignment,
    spec: DesignSpec,
    max_local_iters: int,
    cache: DesignCache | None = None,
    monitor: RefineMonitor | None = None,
) -> RefineResult:
    """Capped refinement: update, greedy passes, final update.

    SSE is non-increasing across the three stages.
    """
    params1 = ols_update(data, gamma, spec, cache)
    sse1 = objective(data, params1, gamma)
    ls = local_search(data, params1, gamma, max_local_iters)
    sse2 = objective(data, params1, ls.gamma)
    params2 = ols_update(data, ls.gamma, spec, cache)
    sse3 = objective(data, params2, ls.gamma)
    stages = (sse1, sse2, sse3)
    if monitor is not None:
        monitor(stages)
    return RefineResult(
        params=params2,
        gamma=ls.gamma,
        sse=sse3,
        rank_deficient=params1.rank_deficient or params2.rank_deficient,
        stage_sses=stages,
    )


def initialize(
    data: PanelDataset,
    n_groups: int,
    spec: DesignSpec,
    seed: int,
) -> tuple[ModelParams, GroupAssignment]:
    """Deterministic starting point shared by all starts.

    Slopes and location effects come from a pooled regression of the
    outcome on the covariates and location indicators (no group
    structure); every group gets the same time path, the per-period mean
    of the residualized outcome.  With identical rows all groups tie and
    every unit lands in group 0.  ``seed`` is only recorded for the
    stochastic steps that follow.
    """
    del seed  # initialization itself is deterministic
    require_observations(data)
    obs = data.observed()
    L = data.n_locations
    keep = [l for l in range(L) if l != spec.reference_location]
    cols = [np.ones(len(obs.y))]
    cols += [(obs.loc == l).astype(float) for l in keep]
    design = np.column_stack(cols + [obs.x]) if data.n_covariates else np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(design, obs.y, rcond=None)
    mu = np.zeros(L)
    mu[keep] = coef[1:L]
    theta = coef[L:]

    resid = obs.y - (obs.x @ theta if data.n_covariates else 0.0) - mu[obs.loc]
    counts = np.bincount(obs.period_idx, minlength=data.n_periods)
    sums = np.bincount(obs.period_idx, weights=resid, minlength=data.n_periods)
    alpha_t = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    params = ModelParams(
        theta=theta,
        alpha=np.tile(alpha_t, (n_groups, 1)),
        mu=mu,
        reference_location=spec.reference_location,
    )
    gamma = assign_groups(data, params)
    return params, gamma


def vns_fit(
    data: PanelDataset,
    spec: DesignSpec,
    config: FitConfig,
    start_index: int,
    cache: DesignCache | None = None,
    monitor: RefineMonitor | None = None,
) -> FitResult:
    """One full search run: initialize, then shake / refine / accept cycles.

    Deterministic given (data, spec, config, start_index).
    """
    if cache is None:
        cache = DesignCache(data, spec)
    seed = stream_seed(config.base_seed, start_index)
    rng = np.random.default_rng(np.random.PCG64(seed))
    G = spec.n_groups
    N = data.n_units

    _, gamma0 = initialize(data, G, spec, seed)
    inc = refine(data, gamma0, spec, config.max_local_iters, cache, monitor)
    best_gamma, best_params, best_sse = inc.gamma, inc.params, inc.sse
    rank_deficient_ever = inc.rank_deficient
    logger.debug("start %d: initial SSE %.6g", start_index, best_sse)

    n_cycles = n_shakes = n_accepted = 0
    for _ in range(config.itermax):
        n_cycles += 1
        n = 1
        while n <= config.neighmax:
            # Shake: move n distinct units to uniformly random groups
            # (a unit may land back in its current group).
            size = min(n, N)
            units = rng.choice(N, size=size, replace=False)
            new_groups = rng.integers(0, G, size=size)
            g = np.array(best_gamma.g)
            g[units] = new_groups
            shaken = GroupAssignment(g, G)
            res = refine(data, shaken, spec, config.max_local_iters, cache, monitor)
            n_shakes += 1
            rank_deficient_ever = rank_deficient_ever or res.rank_deficient
            if res.sse < best_sse:
                best_gamma, best_params, best_sse = res.gamma, res.params, res.sse
                n_accepted += 1
                n = 1
                logger.debug(
                    "start %d: accepted SSE %.6g after shake size %d",
                    start_index, best_sse, size,
                )
            else:
                n += 1

    return FitResult(
        params=best_params,
        gamma=best_gamma,
        sse=best_sse,
        n_vns_cycles=n_cycles,
        n_shakes=n_shakes,
        n_accepted=n_accepted,
        start_index=start_index,
        seed=seed,
        rank_deficient_ever=rank_deficient_ever,
    )


def multi_start_fit(
    data: PanelDataset,
    spec: DesignSpec,
    config: FitConfig,
    n_jobs: int = 1,
    monitor: RefineMonitor | None = None,
) -> FitResult:
    """Best of ``config.n_starts`` independent runs, ties to lowest start index."""
    cache = DesignCache(data, spec)
    if n_jobs != 1 and monitor is None and config.n_starts > 1:
        from joblib import Parallel, delayed

        results: Sequence[FitResult] = Parallel(n_jobs=n_jobs)(
            delayed(vns_fit)(data, spec, config, s) for s in range(config.n_starts)
        )
    else:
        results = [
            vns_fit(data, spec, config, s, cache, monitor)
            for s in range(config.n_starts)
        ]
    return min(results, key=lambda r: (r.sse, r.start_index))
