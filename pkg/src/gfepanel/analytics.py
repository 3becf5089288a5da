"""From fitted models to poverty dynamics.

Predicted welfare, completed outcome paths over the full window,
poverty indicators and weighted rates, transition tables between poor
and non-poor states, one-step-ahead validation against held-out final
periods, fit metrics between transition tables, group profiles, and
poverty-duration summaries.

Conventions: a unit is poor iff welfare is strictly below the line
(ties count as non-poor).  Transition pairs are weighted by the
end-period expansion weight.  The four transition states are ordered
(poor->poor, poor->nonpoor, nonpoor->poor, nonpoor->nonpoor).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import (
    MissingCovariatesError,
    NoOverlapError,
    UndefinedAlphaError,
    UntaggedColumnError,
    ZeroWeightCellError,
)
from .panel import PanelDataset
from .search import FitResult

STATES = ("poor_poor", "poor_nonpoor", "nonpoor_poor", "nonpoor_nonpoor")

SOURCE_OBSERVED = "observed"
SOURCE_IMPUTED = "imputed"
SOURCE_ABSENT = "absent"


def predict(fit: FitResult, data: PanelDataset, i: int, t: int) -> float:
    """Linear prediction x'theta + alpha(g_i, t) + mu(p_i) at cell (i, t).

    Requires covariates at the cell and a defined group-period effect.
    """
    g = fit.gamma.g[i]
    a = fit.params.alpha[g, t]
    if np.isnan(a):
        raise UndefinedAlphaError(
            f"group effect undefined at (group={g}, period={data.period_ids[t]!r})"
        )
    x = data.covariates[i, t]
    if x.size and not np.all(np.isfinite(x)):
        raise MissingCovariatesError(
            f"covariates missing at unit {data.unit_ids[i]!r}, period {data.period_ids[t]!r}"
        )
    xb = float(x @ fit.params.theta) if x.size else 0.0
    return xb + float(a) + float(fit.params.mu[data.locations[i]])


def poverty_status(y: float, z: float) -> bool:
    """True iff poor: welfare strictly below the line (y == z is non-poor)."""
    return y < z


# -- covariate completion ---------------------------------------------------

RULE_TIME_INVARIANT = "time_invariant"
RULE_AGE = "age"
RULE_HOLD_FIRST = "hold_first"
RULE_INTERPOLATE = "interpolate"

_KNOWN_RULES = (RULE_TIME_INVARIANT, RULE_AGE, RULE_HOLD_FIRST, RULE_INTERPOLATE)


def complete_covariates(
    data: PanelDataset, policy: Mapping[int, str]
) -> tuple[np.ndarray, dict[int, str]]:
    """Fill covariates over the full unit-by-period window.

    ``policy`` maps covariate column index to a completion rule:

    - ``time_invariant``: nearest-observation carry, forward first then
      backward;
    - ``age``: nearest observed value plus the signed calendar gap (the
      backward direction extends the stated forward rule and is flagged
      as such in the returned rule map);
    - ``hold_first``: first observed value everywhere;
    - ``interpolate``: linear in calendar time, clamped at the ends.

    Returns the completed (N, T, K) array and the rule applied per column.

    Raises
    ------
    UntaggedColumnError
        If any column lacks a rule while some cell needs completion.
    """
    n, t, k = data.covariates.shape
    needs_completion = not data.mask.all()
    applied: dict[int, str] = {}
    for col in range(k):
        rule = policy.get(col)
        if rule is None:
            if needs_completion:
                raise UntaggedColumnError(
                    f"covariate column {col} ({data.covariate_names[col]}) has no "
                    "completion rule but unobserved cells exist"
                )
            applied[col] = "none"
            continue
        if rule not in _KNOWN_RULES:
            raise ValueError(f"unknown completion rule {rule!r}")
        applied[col] = rule

    periods = np.asarray(data.period_ids, dtype=float)
    out = np.array(data.covariates, dtype=float)
    for i in range(n):
        obs_t = np.nonzero(data.mask[i])[0]
        missing_t = np.nonzero(~data.mask[i])[0]
        if missing_t.size == 0:
            continue
        for col in range(k):
            rule = applied.get(col)
            vals = data.covariates[i, obs_t, col]
            if rule == RULE_TIME_INVARIANT:
                for tm in missing_t:
                    prev = obs_t[obs_t < tm]
                    src = prev[-1] if prev.size else obs_t[obs_t > tm][0]
                    out[i, tm, col] = data.covariates[i, src, col]
            elif rule == RULE_AGE:
                for tm in missing_t:
                    gaps = np.abs(periods[obs_t] - periods[tm])
                    src = obs_t[np.argmin(gaps)]  # ties resolve to earlier
                    out[i, tm, col] = data.covariates[i, src, col] + (
                        periods[tm] - periods[src]
                    )
            elif rule == RULE_HOLD_FIRST:
                out[i, missing_t, col] = vals[0]
            elif rule == RULE_INTERPOLATE:
                out[i, missing_t, col] = np.interp(
                    periods[missing_t], periods[obs_t], vals
                )
    return out, applied


# -- completed paths --------------------------------------------------------

@dataclass(frozen=True)
class CompletedPanel:
    """Outcome over the analysis window: observed where available, else imputed.

    ``source`` holds "observed" / "imputed" / "absent" per cell; absent
    cells (undefined group effect for the unit's group in that period)
    carry NaN in ``y_comp`` and are tallied in ``n_absent``.
    """

    y_comp: np.ndarray           # (N, W)
    source: np.ndarray           # (N, W) object array of source tags
    window: np.ndarray           # (W,) period ids
    completion_policy: str
    n_absent: int


def complete_paths(
    fit: FitResult,
    data: PanelDataset,
    completed_covariates: np.ndarray,
    window=None,
    policy_id: str = "default",
) -> CompletedPanel:
    """Model-implied complete outcome path per unit.

    Observed cells reproduce the dataset outcome bit-exactly; missing
    cells get the linear prediction with completed covariates.  Cells
    whose group-period effect is undefined are emitted as absent.
    """
    if window is None:
        window = data.period_ids
    window = np.asarray(window)
    pos = {p: t for t, p in enumerate(data.period_ids)}
    w_idx = np.array([pos[p] for p in window], dtype=np.intp)

    theta = fit.params.theta
    alpha_rows = fit.params.alpha[fit.gamma.g][:, w_idx]          # (N, W)
    mu_col = fit.params.mu[data.locations][:, None]
    xw = completed_covariates[:, w_idx, :]
    xb = xw @ theta if theta.size else np.zeros(alpha_rows.shape)
    pred = xb + alpha_rows + mu_col

    obs = data.mask[:, w_idx]
    absent = ~obs & np.isnan(alpha_rows)
    y = np.where(obs, data.outcome[:, w_idx], pred)
    y = np.where(absent, np.nan, y)

    source = np.where(obs, SOURCE_OBSERVED, SOURCE_IMPUTED).astype(object)
    source[absent] = SOURCE_ABSENT
    return CompletedPanel(
        y_comp=y,
        source=source,
        window=window,
        completion_policy=policy_id,
        n_absent=int(absent.sum()),
    )


# -- rates and transitions --------------------------------------------------

def weighted_rate(statuses, weights, keys) -> dict:
    """Weighted poor share per key: sum(w * poor) / sum(w).

    Raises
    ------
    ZeroWeightCellError
        If some key has zero total weight.
    """
    statuses = np.asarray(statuses, dtype=bool)
    weights = np.asarray(weights, dtype=float)
    keys = np.asarray(keys)
    out = {}
    for key in pd.unique(keys):
        sel = keys == key
        total = weights[sel].sum()
        if total <= 0:
            raise ZeroWeightCellError(f"zero total weight for key {key!r}")
        out[key] = float(weights[sel & statuses].sum() / total)
    return out


@dataclass(frozen=True)
class TransitionTable:
    """Weighted shares over the four poverty-transition states per end period."""

    periods: np.ndarray          # (P,) end-period ids, sorted
    shares: np.ndarray           # (P, 4)
    counts: np.ndarray           # (P, 4) int
    weight_totals: np.ndarray    # (P,)

    def share_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.shares, columns=list(STATES))
        df.insert(0, "period", self.periods)
        df["n_pairs"] = self.counts.sum(axis=1)
        df["weight_total"] = self.weight_totals
        return df


def transition_table(prev_poor, curr_poor, end_periods, weights) -> TransitionTable:
    """Weighted transition shares per end period.

    Each element describes one unit's status pair (t-1, t) with the
    end-period weight.  Periods with no pairs are omitted.
    """
    prev_poor = np.asarray(prev_poor, dtype=bool)
    curr_poor = np.asarray(curr_poor, dtype=bool)
    end_periods = np.asarray(end_periods)
    weights = np.asarray(weights, dtype=float)
    state = np.where(prev_poor, 0, 2) + np.where(curr_poor, 0, 1)

    periods = np.array(sorted(pd.unique(end_periods)))
    shares = np.zeros((len(periods), 4))
    counts = np.zeros((len(periods), 4), dtype=int)
    totals = np.zeros(len(periods))
    for r, p in enumerate(periods):
        sel = end_periods == p
        for s in range(4):
            in_state = sel & (state == s)
            counts[r, s] = int(in_state.sum())
            shares[r, s] = weights[in_state].sum()
        totals[r] = weights[sel].sum()
        if totals[r] > 0:
            shares[r] /= totals[r]
    return TransitionTable(periods=periods, shares=shares, counts=counts, weight_totals=totals)


@dataclass(frozen=True)
class TransitionFitMetrics:
    """Distance between a predicted and a reference transition table."""

    periods: np.ndarray
    mae: np.ndarray
    rmse: np.ndarray
    tv: np.ndarray
    mae_avg: float
    rmse_avg: float
    tv_avg: float
    tv_max: float


def transition_fit(predicted: TransitionTable, actual: TransitionTable) -> TransitionFitMetrics:
    """Per-end-period MAE/RMSE over the 4 states and total variation distance.

    TV_t = 0.5 * sum_s |diff_s|, which equals 2 * MAE_t over 4 states.
    Aggregates average over shared periods; tv_max takes the maximum.
    """
    shared = [p for p in predicted.periods if p in set(actual.periods.tolist())]
    if not shared:
        raise NoOverlapError("transition tables share no end periods")
    p_idx = {p: r for r, p in enumerate(predicted.periods)}
    a_idx = {p: r for r, p in enumerate(actual.periods)}
    mae, rmse, tv = [], [], []
    for p in shared:
        diff = predicted.shares[p_idx[p]] - actual.shares[a_idx[p]]
        mae.append(np.mean(np.abs(diff)))
        rmse.append(np.sqrt(np.mean(diff**2)))
        tv.append(0.5 * np.sum(np.abs(diff)))
    mae, rmse, tv = map(np.asarray, (mae, rmse, tv))
    return TransitionFitMetrics(
        periods=np.asarray(shared),
        mae=mae,
        rmse=rmse,
        tv=tv,
        mae_avg=float(mae.mean()),
        rmse_avg=float(rmse.mean()),
        tv_avg=float(tv.mean()),
        tv_max=float(tv.max()),
    )


# -- one-step-ahead validation ----------------------------------------------

@dataclass(frozen=True)
class OneStepValidation:
    actual: TransitionTable
    predicted: TransitionTable
    accuracy: float                  # weighted share of matching end statuses
    n_pairs: int
    excluded_nonconsecutive: int
    excluded_undefined: int


def one_step_validation(fit: FitResult, data: PanelDataset, split) -> OneStepValidation:
    """Transitions into each unit's held-out final period.

    A unit enters iff its last observed period immediately follows its
    previous observed period on the calendar.  The actual pair uses
    observed statuses at both periods; the predicted pair replaces the
    end status with the status of the model prediction.  Pairs are
    weighted by the end-period weight.
    """
    periods = np.asarray(data.period_ids)
    prev_list, act_list, pred_list, end_list, w_list = [], [], [], [], []
    excluded_nc = excluded_ud = 0
    for i, t in split.test_cells:
        obs_t = np.nonzero(data.mask[i])[0]
        before = obs_t[obs_t < t]
        if before.size == 0 or periods[t] - periods[before[-1]] != 1:
            excluded_nc += 1
            continue
        tp = before[-1]
        g = fit.gamma.g[i]
        if np.isnan(fit.params.alpha[g, t]):
            excluded_ud += 1
            continue
        z_t = data.poverty_line[i, t]
        prev_list.append(poverty_status(data.outcome[i, tp], data.poverty_line[i, tp]))
        act_list.append(poverty_status(data.outcome[i, t], z_t))
        pred_list.append(poverty_status(predict(fit, data, i, t), z_t))
        end_list.append(periods[t])
        w_list.append(data.weight[i, t])

    actual = transition_table(prev_list, act_list, end_list, w_list)
    predicted = transition_table(prev_list, pred_list, end_list, w_list)
    w = np.asarray(w_list)
    match = np.asarray(act_list) == np.asarray(pred_list)
    accuracy = float(w[match].sum() / w.sum()) if w.size else float("nan")
    return OneStepValidation(
        actual=actual,
        predicted=predicted,
        accuracy=accuracy,
        n_pairs=len(w_list),
        excluded_nonconsecutive=excluded_nc,
        excluded_undefined=excluded_ud,
    )


# -- profiles and durations -------------------------------------------------

def group_profiles(fit: FitResult, data: PanelDataset, baseline_columns=None) -> pd.DataFrame:
    """Per-group sizes, weighted population shares and baseline means.

    Baseline covariates are taken at each unit's first observed period
    and weighted by that period's expansion weight.  Groups are ordered
    by descending mean of their defined period effects.
    """
    if baseline_columns is None:
        baseline_columns = list(range(data.n_covariates))
    first_t = np.where(data.mask, np.arange(data.n_periods)[None, :], data.n_periods).min(axis=1)
    units = np.arange(data.n_units)
    w0 = data.weight[units, first_t]
    x0 = data.covariates[units, first_t, :]
    total_w = w0.sum()

    rows = []
    for g in range(fit.params.n_groups):
        sel = fit.gamma.g == g
        alpha_g = fit.params.alpha[g]
        mean_alpha = float(np.nanmean(alpha_g)) if np.any(~np.isnan(alpha_g)) else float("nan")
        wsum = w0[sel].sum()
        row = {
            "group": g + 1,
            "mean_alpha": mean_alpha,
            "n_units": int(sel.sum()),
            "pop_share": float(wsum / total_w) if total_w > 0 else float("nan"),
        }
        for c in baseline_columns:
            name = data.covariate_names[c]
            row[name] = (
                float((w0[sel] * x0[sel, c]).sum() / wsum) if wsum > 0 else float("nan")
            )
        rows.append(row)
    df = pd.DataFrame(rows).sort_values("mean_alpha", ascending=False, kind="stable")
    df.insert(0, "rank", range(1, len(df) + 1))
    return df.reset_index(drop=True)


@dataclass(frozen=True)
class DurationSummary:
    per_unit: pd.DataFrame           # unit, share_poor, chronic, n_spells, longest_spell
    spell_lengths: dict              # spell length -> count across all units
    chronic_threshold: int


def duration_summaries(poor: np.ndarray, unit_ids, chronic_threshold: int) -> DurationSummary:
    """Time-in-poverty share, chronic flags and spell lengths over a window.

    ``poor`` is an (N, W) boolean matrix of completed statuses; a spell
    is a maximal run of consecutive poor periods.  A unit is chronically
    poor when its poor-period count reaches ``chronic_threshold``.
    """
    poor = np.asarray(poor, dtype=bool)
    n, w = poor.shape
    spell_counter: dict[int, int] = {}
    rows = []
    for i in range(n):
        run = 0
        spells = []
        for t in range(w):
            if poor[i, t]:
                run += 1
            elif run:
                spells.append(run)
                run = 0
        if run:
            spells.append(run)
        for s in spells:
            spell_counter[s] = spell_counter.get(s, 0) + 1
        n_poor = int(poor[i].sum())
        rows.append(
            {
                "unit": unit_ids[i],
                "share_poor": n_poor / w,
                "chronic": n_poor >= chronic_threshold,
                "n_spells": len(spells),
                "longest_spell": max(spells) if spells else 0,
            }
        )
    return DurationSummary(
        per_unit=pd.DataFrame(rows),
        spell_lengths=dict(sorted(spell_counter.items())),
        chronic_threshold=chronic_threshold,
    )
