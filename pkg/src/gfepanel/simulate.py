"""Synthetic rotating panels with known latent structure.

Generates datasets from the additive model y = x'theta + group-time
effect + location effect + Gaussian noise, with configurable rotation
designs, so estimation and analytics can be verified end to end against
ground truth.  Fully deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleRotationError
from .panel import GroupAssignment, ModelParams, PanelDataset

ROTATION_FULL = "full"
ROTATION_WINDOW = "window"
ROTATION_RANDOM = "random"

_MAX_MASK_RESAMPLES = 1000


@dataclass(frozen=True)
class DgpSpec:
    """Parameters of the synthetic data-generating process.

    ``rotation`` selects the observation design: "full" (balanced),
    "window" (each unit observed ``window_length`` consecutive periods
    with staggered entry), or "random" (i.i.d. Bernoulli(``p_obs``)
    cells, rows resampled until every unit has at least two
    observations).
    """

    n_units: int
    n_periods: int
    n_groups: int
    n_covariates: int
    n_locations: int
    theta: tuple
    alpha: tuple                      # G rows of T values
    mu: tuple                         # L values, reference entry 0
    noise_sd: float = 1.0
    rotation: str = ROTATION_FULL
    window_length: int = 0
    p_obs: float = 0.8
    group_weights: tuple = ()
    weight_law: str = "constant"      # "constant" or "positive"
    poverty_line: tuple = ()          # per-period; empty -> zeros
    seed: int = 0

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (self.n_groups, self.n_periods):
            raise ValueError("alpha must have shape (n_groups, n_periods)")
        if len(self.theta) != self.n_covariates:
            raise ValueError("theta length must match n_covariates")
        mu = np.asarray(self.mu, dtype=float)
        if len(mu) != self.n_locations or mu[0] != 0.0:
            raise ValueError("mu must have length n_locations with mu[0] == 0")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.rotation not in (ROTATION_FULL, ROTATION_WINDOW, ROTATION_RANDOM):
            raise ValueError(f"unknown rotation {self.rotation!r}")
        if self.rotation == ROTATION_WINDOW and not 2 <= self.window_length <= self.n_periods:
            raise ValueError("window_length must be in [2, n_periods]")
        if self.rotation == ROTATION_RANDOM and not 0 < self.p_obs <= 1:
            raise ValueError("p_obs must be in (0, 1]")
        if self.group_weights and len(self.group_weights) != self.n_groups:
            raise ValueError("group_weights length must match n_groups")


def _rotation_mask(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    n, t = spec.n_units, spec.n_periods
    if spec.rotation == ROTATION_FULL:
        return np.ones((n, t), dtype=bool)
    if spec.rotation == ROTATION_WINDOW:
        # Staggered entry: unit i starts at i mod (T - w + 1), so each
        # period keeps roughly N * w / T units active.
        mask = np.zeros((n, t), dtype=bool)
        n_slots = t - spec.window_length + 1
        for i in range(n):
            start = i % n_slots
            mask[i, start:start + spec.window_length] = True
        return mask
    # Random cells; resample rows with fewer than two observations.
    mask = rng.random((n, t)) < spec.p_obs
    for _ in range(_MAX_MASK_RESAMPLES):
        short = np.nonzero(mask.sum(axis=1) < 2)[0]
        if short.size == 0:
            return mask
        mask[short] = rng.random((short.size, t)) < spec.p_obs
    raise InfeasibleRotationError(
        f"could not give every unit >= 2 observations in {_MAX_MASK_RESAMPLES} resamples"
    )


def generate(spec: DgpSpec) -> tuple[PanelDataset, GroupAssignment, ModelParams]:
    """Draw one dataset plus its ground-truth assignment and parameters."""
    rng = np.random.default_rng(np.random.PCG64(spec.seed))
    n, t, k = spec.n_units, spec.n_periods, spec.n_covariates

    weights_g = (
        np.asarray(spec.group_weights, dtype=float)
        if spec.group_weights
        else np.full(spec.n_groups, 1.0 / spec.n_groups)
    )
    g = rng.choice(spec.n_groups, size=n, p=weights_g / weights_g.sum())
    locations = rng.integers(0, spec.n_locations, size=n)
    covariates = rng.standard_normal((n, t, k)) if k else np.empty((n, t, 0))
    eps = spec.noise_sd * rng.standard_normal((n, t)) if spec.noise_sd else np.zeros((n, t))

    theta = np.asarray(spec.theta, dtype=float)
    alpha = np.asarray(spec.alpha, dtype=float)
    mu = np.asarray(spec.mu, dtype=float)
    xb = covariates @ theta if k else np.zeros((n, t))
    outcome = xb + alpha[g] + mu[locations][:, None] + eps

    mask = _rotation_mask(spec, rng)
    if spec.weight_law == "positive":
        weight = rng.uniform(0.5, 2.0, size=(n, t))
    else:
        weight = np.ones((n, t))
    line = (
        np.tile(np.asarray(spec.poverty_line, dtype=float), (n, 1))
        if spec.poverty_line
        else np.zeros((n, t))
    )

    data = PanelDataset(
        unit_ids=tuple(f"u{i}" for i in range(n)),
        period_ids=np.arange(t),
        locations=locations,
        outcome=outcome,
        covariates=covariates,
        mask=mask,
        weight=weight,
        poverty_line=line,
        n_locations=spec.n_locations,
    )
    gamma = GroupAssignment(g, spec.n_groups)
    params = ModelParams(theta=theta, alpha=alpha, mu=mu)
    return data, gamma, params


def separation(alpha: np.ndarray, sigma: float) -> float:
    """Minimum pairwise RMS distance between group time paths, over sigma.

    Infinity when sigma is zero (noiseless paths are always separable).
    """
    alpha = np.asarray(alpha, dtype=float)
    g = alpha.shape[0]
    if g < 2:
        return float("inf")
    dmin = min(
        float(np.sqrt(np.mean((alpha[a] - alpha[b]) ** 2)))
        for a in range(g)
        for b in range(a + 1, g)
    )
    if sigma == 0:
        return float("inf")
    return dmin / sigma
