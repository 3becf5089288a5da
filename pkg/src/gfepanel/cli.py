"""Command-line front end: simulate, fit, select-g, validate, transitions, complete.

Each subcommand reads a JSON run config (``--config``), applies any
command-line overrides, runs the corresponding pipeline and writes
deterministic artifacts into the output directory:

- ``fit``          -> fit.json
- ``select-g``     -> selection.csv, selection.json
- ``validate``     -> transitions_actual.csv, transitions_pred.csv, fit_metrics.csv
- ``transitions``  -> transitions_actual.csv
- ``complete``     -> completed_panel.csv, profiles.csv, durations.csv
- ``simulate``     -> panel.csv, truth.json

Errors from the pipeline exit nonzero with a one-line JSON diagnostic on
stderr naming the subcommand and the error type.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd

from . import __version__
from .analytics import (
    complete_covariates,
    complete_paths,
    duration_summaries,
    group_profiles,
    one_step_validation,
    poverty_status,
    transition_fit,
    transition_table,
)
from .errors import GfePanelError
from .io import ColumnMap, RunConfig, export_dataset, fit_to_dict, ingest, write_json
from .ols import DesignSpec
from .panel import FitConfig
from .search import multi_start_fit
from .selection import last_year_holdout, select_g
from .simulate import DgpSpec, generate


def _load_config(config_path, **overrides) -> RunConfig:
    raw = json.loads(Path(config_path).read_text()) if config_path else {}
    for key, value in overrides.items():
        if value is not None:
            if key in ("n_starts", "base_seed"):
                raw.setdefault("fit", {})[key] = value
            else:
                raw[key] = value
    return RunConfig.from_dict(raw)


def _fail(subcommand: str, exc: Exception):
    diag = {"subcommand": subcommand, "error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(diag), err=True)
    sys.exit(1)


def _common(f):
    f = click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                     help="JSON run configuration.")(f)
    f = click.option("--input", "input_path", type=click.Path(), default=None,
                     help="Input panel CSV (overrides config).")(f)
    f = click.option("--out", "output_dir", type=click.Path(), default=None,
                     help="Output directory (overrides config).")(f)
    f = click.option("--n-starts", type=int, default=None)(f)
    f = click.option("--seed", "base_seed", type=int, default=None)(f)
    f = click.option("--threads", "n_jobs", type=int, default=None)(f)
    f = click.option("--min-rounds", "min_rounds", type=int, default=None)(f)
    f = click.option("--ihs/--no-ihs", "apply_ihs", default=None)(f)
    return f


@click.group()
@click.version_option(__version__)
def main():
    """Latent-group panel estimation and poverty-dynamics tables."""


def _prepare(config_path, overrides):
    config = _load_config(config_path, **overrides)
    data, report = ingest(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return config, data, report, out


def _run_fit(config, data):
    spec = DesignSpec(n_groups=config.n_groups)
    return multi_start_fit(data, spec, config.fit, n_jobs=config.n_jobs), spec


@main.command("fit")
@_common
@click.option("--g", "n_groups", type=int, default=None, help="Number of groups.")
def cmd_fit(config_path, n_groups, **overrides):
    """Fit the model with a fixed group count; write fit.json."""
    try:
        if n_groups is not None:
            overrides["n_groups"] = n_groups
        config, data, report, out = _prepare(config_path, overrides)
        fit, _ = _run_fit(config, data)
        summary = fit_to_dict(fit, data, config)
        summary["ingest_report"] = dataclasses.asdict(report)
        write_json(summary, out / "fit.json")
        click.echo(f"fit: G={config.n_groups} SSE={fit.sse:.6g} -> {out / 'fit.json'}")
    except (GfePanelError, OSError, ValueError, json.JSONDecodeError) as exc:
        _fail("fit", exc)


@main.command("select-g")
@_common
@click.option("--g-grid", type=str, default=None,
              help="Comma-separated group counts, e.g. 1,2,3,4.")
def cmd_select_g(config_path, g_grid, **overrides):
    """Two-phase grid search over the group count; write selection.csv."""
    try:
        if g_grid is not None:
            overrides["g_grid"] = tuple(int(v) for v in g_grid.split(","))
        config, data, report, out = _prepare(config_path, overrides)
        grid = config.g_grid or (config.n_groups,)
        coarse = config.fit
        fine = dataclasses.replace(coarse, n_starts=max(coarse.n_starts, 10))
        rows, chosen = select_g(
            data, grid, coarse, fine, config.shortlist_size, n_jobs=config.n_jobs
        )
        # One row per grid value: the fine rerun supersedes the coarse pass.
        table = (
            pd.DataFrame([dataclasses.asdict(r) for r in rows])
            .drop_duplicates("n_groups", keep="last")
            .sort_values("n_groups")
        )
        table.to_csv(out / "selection.csv", index=False)
        write_json(
            {"version": __version__, "config": config.to_dict(), "chosen_g": chosen,
             "ingest_report": dataclasses.asdict(report)},
            out / "selection.json",
        )
        click.echo(f"select-g: chosen G={chosen} -> {out / 'selection.csv'}")
    except (GfePanelError, OSError, ValueError, json.JSONDecodeError) as exc:
        _fail("select-g", exc)


@main.command("validate")
@_common
@click.option("--g", "n_groups", type=int, default=None)
def cmd_validate(config_path, n_groups, **overrides):
    """One-step-ahead transition validation on a last-period holdout."""
    try:
        if n_groups is not None:
            overrides["n_groups"] = n_groups
        config, data, report, out = _prepare(config_path, overrides)
        split = last_year_holdout(data)
        train = data.with_mask(split.train_mask)
        fit, _ = _run_fit(config, train)
        result = one_step_validation(fit, data, split)
        result.actual.share_frame().to_csv(out / "transitions_actual.csv", index=False)
        result.predicted.share_frame().to_csv(out / "transitions_pred.csv", index=False)
        metrics = transition_fit(result.predicted, result.actual)
        per_period = pd.DataFrame(
            {"period": metrics.periods, "mae": metrics.mae,
             "rmse": metrics.rmse, "tv": metrics.tv}
        )
        per_period.to_csv(out / "fit_metrics.csv", index=False)
        write_json(
            {"version": __version__, "config": config.to_dict(),
             "accuracy": result.accuracy, "n_pairs": result.n_pairs,
             "excluded_nonconsecutive": result.excluded_nonconsecutive,
             "excluded_undefined": result.excluded_undefined,
             "mae_avg": metrics.mae_avg, "rmse_avg": metrics.rmse_avg,
             "tv_avg": metrics.tv_avg, "tv_max": metrics.tv_max,
             "ingest_report": dataclasses.asdict(report)},
            out / "validation.json",
        )
        click.echo(
            f"validate: accuracy={result.accuracy:.4f} over {result.n_pairs} pairs "
            f"-> {out / 'fit_metrics.csv'}"
        )
    except (GfePanelError, OSError, ValueError, json.JSONDecodeError) as exc:
        _fail("validate", exc)


@main.command("transitions")
@_common
def cmd_transitions(config_path, **overrides):
    """Observed poverty-transition shares between consecutive years."""
    try:
        config, data, report, out = _prepare(config_path, overrides)
        periods = np.asarray(data.period_ids)
        prev, curr, ends, wts = [], [], [], []
        for i in range(data.n_units):
            obs_t = np.nonzero(data.mask[i])[0]
            for a, b in zip(obs_t[:-1], obs_t[1:]):
                if periods[b] - periods[a] != 1:
                    continue
                prev.append(poverty_status(data.outcome[i, a], data.poverty_line[i, a]))
                curr.append(poverty_status(data.outcome[i, b], data.poverty_line[i, b]))
                ends.append(periods[b])
                wts.append(data.weight[i, b])
        table = transition_table(prev, curr, ends, wts)
        table.share_frame().to_csv(out / "transitions_actual.csv", index=False)
        click.echo(f"transitions: {len(wts)} pairs -> {out / 'transitions_actual.csv'}")
    except (GfePanelError, OSError, ValueError, json.JSONDecodeError) as exc:
        _fail("transitions", exc)


@main.command("complete")
@_common
@click.option("--g", "n_groups", type=int, default=None)
@click.option("--chronic-threshold", type=int, default=None,
              help="Poor-period count that flags a unit as chronically poor.")
def cmd_complete(config_path, n_groups, chronic_threshold, **overrides):
    """Completed outcome paths, group profiles and poverty durations."""
    try:
        if n_groups is not None:
            overrides["n_groups"] = n_groups
        config, data, report, out = _prepare(config_path, overrides)
        fit, _ = _run_fit(config, data)
        policy = {
            data.covariate_names.index(name): rule
            for name, rule in config.columns.completion.items()
        }
        covs, _applied = complete_covariates(data, policy)
        panel = complete_paths(fit, data, covs)
        n, w = panel.y_comp.shape
        rows = pd.DataFrame(
            {
                "unit": np.repeat(list(data.unit_ids), w),
                "period": np.tile(panel.window, n),
                "y_comp": panel.y_comp.ravel(),
                "source": panel.source.ravel(),
            }
        )
        rows.to_csv(out / "completed_panel.csv", index=False)
        group_profiles(fit, data).to_csv(out / "profiles.csv", index=False)
        line = np.array(
            [[data.poverty_line[i, np.nonzero(data.mask[i])[0][-1]]] * w for i in range(n)]
        )
        poor = np.where(np.isnan(panel.y_comp), False, panel.y_comp < line)
        k = chronic_threshold if chronic_threshold is not None else (w + 1) // 2
        durations = duration_summaries(poor, data.unit_ids, k)
        durations.per_unit.to_csv(out / "durations.csv", index=False)
        click.echo(
            f"complete: {panel.n_absent} absent cells, chronic threshold {k} "
            f"-> {out / 'completed_panel.csv'}"
        )
    except (GfePanelError, OSError, ValueError, json.JSONDecodeError) as exc:
        _fail("complete", exc)


@main.command("simulate")
@click.option("--out", "output_dir", type=click.Path(), default=".")
@click.option("--n", "n_units", type=int, default=200)
@click.option("--t", "n_periods", type=int, default=10)
@click.option("--g", "n_groups", type=int, default=3)
@click.option("--k", "n_covariates", type=int, default=2)
@click.option("--l", "n_locations", type=int, default=2)
@click.option("--sigma", type=float, default=0.4)
@click.option("--rotation", type=click.Choice(["full", "window", "random"]), default="window")
@click.option("--window-length", type=int, default=4)
@click.option("--p-obs", type=float, default=0.8)
@click.option("--seed", type=int, default=0)
def cmd_simulate(output_dir, n_units, n_periods, n_groups, n_covariates,
                 n_locations, sigma, rotation, window_length, p_obs, seed):
    """Generate a synthetic rotating panel; write panel.csv and truth.json."""
    try:
        rng = np.random.default_rng(np.random.PCG64(seed + 1))
        alpha = np.arange(n_groups)[:, None] * 1.5 + 0.1 * rng.standard_normal(
            (n_groups, n_periods)
        )
        spec = DgpSpec(
            n_units=n_units,
            n_periods=n_periods,
            n_groups=n_groups,
            n_covariates=n_covariates,
            n_locations=n_locations,
            theta=tuple(1.0 / (j + 1) for j in range(n_covariates)),
            alpha=tuple(map(tuple, alpha)),
            mu=(0.0,) + tuple(0.5 for _ in range(n_locations - 1)),
            noise_sd=sigma,
            rotation=rotation,
            window_length=window_length if rotation == "window" else 0,
            p_obs=p_obs,
            seed=seed,
        )
        data, gamma, params = generate(spec)
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        export_dataset(data, out / "panel.csv")
        write_json(
            {
                "version": __version__,
                "seed": seed,
                "theta": params.theta.tolist(),
                "alpha": params.alpha.tolist(),
                "mu": params.mu.tolist(),
                "assignment": {
                    str(u): int(g) + 1 for u, g in zip(data.unit_ids, gamma.g)
                },
            },
            out / "truth.json",
        )
        click.echo(f"simulate: {data.n_observed} observed cells -> {out / 'panel.csv'}")
    except (GfePanelError, OSError, ValueError) as exc:
        _fail("simulate", exc)


if __name__ == "__main__":
    main()
