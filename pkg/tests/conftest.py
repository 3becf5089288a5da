"""Shared helpers: small hand-built panels and random instances."""

from __future__ import annotations

import numpy as np
import pytest

from gfepanel.panel import PanelDataset


def make_panel(
    outcome,
    mask=None,
    covariates=None,
    locations=None,
    weight=None,
    poverty_line=None,
    period_ids=None,
    n_locations=0,
):
    """Build a PanelDataset from dense arrays with sensible defaults."""
    outcome = np.asarray(outcome, dtype=float)
    n, t = outcome.shape
    if mask is None:
        mask = np.ones((n, t), dtype=bool)
    if covariates is None:
        covariates = np.empty((n, t, 0))
    covariates = np.asarray(covariates, dtype=float)
    if covariates.ndim == 2:
        covariates = covariates[:, :, None]
    if locations is None:
        locations = np.zeros(n, dtype=int)
    if weight is None:
        weight = np.ones((n, t))
    if poverty_line is None:
        poverty_line = np.zeros((n, t))
    if period_ids is None:
        period_ids = np.arange(t)
    return PanelDataset(
        unit_ids=tuple(f"u{i}" for i in range(n)),
        period_ids=period_ids,
        locations=locations,
        outcome=outcome,
        covariates=covariates,
        mask=np.asarray(mask, dtype=bool),
        weight=weight,
        poverty_line=np.asarray(poverty_line, dtype=float),
        n_locations=n_locations,
    )


def random_panel(rng, n=8, t=4, k=1, n_locations=2, p_obs=1.0):
    """Random dense panel; each unit keeps at least two observations."""
    mask = rng.random((n, t)) < p_obs
    for i in range(n):
        while mask[i].sum() < 2:
            mask[i] = rng.random(t) < max(p_obs, 0.5)
    return make_panel(
        outcome=rng.standard_normal((n, t)),
        mask=mask,
        covariates=rng.standard_normal((n, t, k)),
        locations=rng.integers(0, n_locations, size=n),
        n_locations=n_locations,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
