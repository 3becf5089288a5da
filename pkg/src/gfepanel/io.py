"""File input/output: long-format panel CSVs, run configs, result artifacts.

The canonical on-disk format is a long CSV with one row per observed
unit-period cell.  A column map names the unit, period, outcome, weight,
location and poverty-line columns plus the covariate columns; exports
write the same format ingest reads, so datasets round-trip exactly
(pandas emits shortest-round-trip float text).

Result artifacts (fit.json and the CSV tables) are deterministic given
the run configuration: keys are sorted and floats serialized verbatim.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import IngestError
from .panel import FitConfig, PanelDataset, validate_dataset
from .search import FitResult


def ihs(x):
    """Inverse hyperbolic sine: ln(x + sqrt(x^2 + 1)).  ihs(0) == 0."""
    return np.arcsinh(x)


@dataclass(frozen=True)
class ColumnMap:
    """Names of the panel columns inside an input CSV."""

    unit: str = "unit"
    period: str = "period"
    outcome: str = "outcome"
    weight: str = "weight"
    location: str = "location"
    poverty_line: str = "poverty_line"
    covariates: tuple = ()            # column names, in design order
    completion: dict = field(default_factory=dict)  # column name -> rule


@dataclass(frozen=True)
class RangeFilter:
    """Keep rows where ``column`` lies in [low, high] (inclusive)."""

    column: str
    low: float = float("-inf")
    high: float = float("inf")


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs: input, mapping, filters, tuning."""

    input_path: str = ""
    columns: ColumnMap = field(default_factory=ColumnMap)
    apply_ihs: bool = False
    min_rounds: int = 2
    range_filters: tuple = ()         # of RangeFilter
    fit: FitConfig = field(default_factory=FitConfig)
    n_groups: int = 2
    g_grid: tuple = ()
    shortlist_size: int = 6
    n_jobs: int = 1
    output_dir: str = "."

    def __post_init__(self):
        if self.min_rounds < 2:
            raise ValueError("min_rounds must be >= 2")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        raw = json.loads(Path(path).read_text())
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        cols = raw.pop("columns", {})
        cols.setdefault("covariates", ())
        cols["covariates"] = tuple(cols["covariates"])
        fit = raw.pop("fit", {})
        filters = tuple(RangeFilter(**f) for f in raw.pop("range_filters", ()))
        raw["g_grid"] = tuple(raw.get("g_grid", ()))
        return cls(
            columns=ColumnMap(**cols),
            fit=FitConfig(**fit),
            range_filters=filters,
            **raw,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["columns"]["covariates"] = list(d["columns"]["covariates"])
        d["range_filters"] = list(d["range_filters"])
        d["g_grid"] = list(d["g_grid"])
        return d


@dataclass(frozen=True)
class IngestReport:
    rows_read: int
    rows_after_range_filters: int
    units_dropped_min_rounds: int
    rows_kept: int
    ihs_applied: bool


def ingest(config: RunConfig) -> tuple[PanelDataset, IngestReport]:
    """Read, filter, optionally IHS-transform and validate a panel CSV.

    Filters apply in order: numeric range filters on rows, then the
    minimum-observed-rounds filter on units.  The IHS transform applies
    to the outcome and the poverty line (keeping both on one scale).

    Raises
    ------
    IngestError
        On parse failure, missing columns, or an empty post-filter panel.
    """
    cm = config.columns
    try:
        # round_trip parsing so exported values come back bit-exactly
        df = pd.read_csv(config.input_path, float_precision="round_trip")
    except Exception as exc:
        raise IngestError(f"cannot read {config.input_path}: {exc}") from exc
    rows_read = len(df)

    needed = [cm.unit, cm.period, cm.outcome, cm.weight, cm.location, cm.poverty_line]
    needed += list(cm.covariates)
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise IngestError(f"missing columns: {missing}")

    for f in config.range_filters:
        if f.column not in df.columns:
            raise IngestError(f"range filter on unknown column {f.column!r}")
        df = df[(df[f.column] >= f.low) & (df[f.column] <= f.high)]
    rows_after = len(df)

    rounds = df.groupby(cm.unit)[cm.period].nunique()
    keep_units = rounds[rounds >= config.min_rounds].index
    units_dropped = int(len(rounds) - len(keep_units))
    df = df[df[cm.unit].isin(keep_units)]
    if df.empty:
        raise IngestError("no rows left after filtering")

    if config.apply_ihs:
        df = df.assign(
            **{cm.outcome: ihs(df[cm.outcome]), cm.poverty_line: ihs(df[cm.poverty_line])}
        )

    # First-appearance order keeps export -> ingest order-preserving.
    unit_ids = pd.unique(df[cm.unit]).tolist()
    periods = np.array(sorted(df[cm.period].unique().tolist()))
    u_pos = {u: i for i, u in enumerate(unit_ids)}
    t_pos = {p: t for t, p in enumerate(periods)}
    n, t, k = len(unit_ids), len(periods), len(cm.covariates)

    mask = np.zeros((n, t), dtype=bool)
    outcome = np.zeros((n, t))
    weight = np.zeros((n, t))
    line = np.zeros((n, t))
    covs = np.zeros((n, t, k))
    locs = np.full((n, t), np.nan)
    iu = df[cm.unit].map(u_pos).to_numpy()
    it = df[cm.period].map(t_pos).to_numpy()
    mask[iu, it] = True
    outcome[iu, it] = df[cm.outcome].to_numpy(dtype=float)
    weight[iu, it] = df[cm.weight].to_numpy(dtype=float)
    line[iu, it] = df[cm.poverty_line].to_numpy(dtype=float)
    locs[iu, it] = df[cm.location].to_numpy(dtype=float)
    for j, c in enumerate(cm.covariates):
        covs[iu, it, j] = df[c].to_numpy(dtype=float)

    data = validate_dataset(
        unit_ids=unit_ids,
        period_ids=periods,
        locations=locs,
        outcome=outcome,
        covariates=covs,
        mask=mask,
        weight=weight,
        poverty_line=line,
        covariate_names=tuple(cm.covariates),
    )
    report = IngestReport(
        rows_read=rows_read,
        rows_after_range_filters=rows_after,
        units_dropped_min_rounds=units_dropped,
        rows_kept=len(df),
        ihs_applied=config.apply_ihs,
    )
    return data, report


def export_dataset(data: PanelDataset, path, columns: ColumnMap | None = None) -> None:
    """Write the observed cells as a long CSV ingest can read back exactly."""
    cm = columns or ColumnMap(covariates=data.covariate_names)
    cov_names = cm.covariates or data.covariate_names
    obs = data.observed()
    frame = {
        cm.unit: [data.unit_ids[i] for i in obs.unit_idx],
        cm.period: np.asarray(data.period_ids)[obs.period_idx],
        cm.outcome: obs.y,
        cm.weight: data.weight[obs.unit_idx, obs.period_idx],
        cm.location: obs.loc,
        cm.poverty_line: data.poverty_line[obs.unit_idx, obs.period_idx],
    }
    for j, name in enumerate(cov_names):
        frame[name] = obs.x[:, j]
    # Shortest-round-trip float text so ingest reproduces values bit-exactly.
    pd.DataFrame(frame).to_csv(path, index=False, float_format=lambda v: repr(float(v)))


def fit_to_dict(fit: FitResult, data: PanelDataset, config: RunConfig) -> dict:
    """JSON-serializable fit summary: parameters, assignment, diagnostics.

    Group labels are exported 1-based; undefined group-time effects are
    emitted as null.
    """
    from . import __version__

    alpha = [
        [None if np.isnan(v) else v for v in row] for row in fit.params.alpha.tolist()
    ]
    return {
        "version": __version__,
        "config": config.to_dict(),
        "sse": fit.sse,
        "theta": fit.params.theta.tolist(),
        "alpha": alpha,
        "mu": fit.params.mu.tolist(),
        "reference_location": fit.params.reference_location,
        "assignment": {
            str(u): int(g) + 1 for u, g in zip(data.unit_ids, fit.gamma.g)
        },
        "n_groups": fit.params.n_groups,
        "diagnostics": {
            "start_index": fit.start_index,
            "seed": fit.seed,
            "n_vns_cycles": fit.n_vns_cycles,
            "n_shakes": fit.n_shakes,
            "n_accepted": fit.n_accepted,
            "rank_deficient_ever": fit.rank_deficient_ever,
        },
    }


def write_json(obj: dict, path) -> None:
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")
