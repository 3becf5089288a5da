"""Scikit-learn style facade over the functional fitting core.

``GroupedFixedEffects`` wraps dataset construction and the multi-start
search behind a ``fit``/``predict`` estimator with ``get_params`` /
``set_params`` support, so the model slots into sklearn tooling (e.g.
``clone``, grid utilities).  The functional API in :mod:`gfepanel.search`
remains the primary interface; this class adds no behavior.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .ols import DesignSpec
from .panel import FitConfig, PanelDataset
from .search import multi_start_fit


class GroupedFixedEffects(BaseEstimator):
    """Latent-group panel model with location effects and covariates.

    Parameters mirror :class:`gfepanel.panel.FitConfig` plus the group
    count.  ``fit`` takes a :class:`PanelDataset` (the panel structure
    does not decompose into sklearn's flat (X, y) arrays).

    Attributes (after fit)
    ----------------------
    theta_ : (K,) slope estimates
    alpha_ : (G, T) group-time effects, NaN where undefined
    mu_ : (L,) location effects, reference entry exactly 0
    gamma_ : (N,) 0-based group assignment
    sse_ : objective value at the solution
    result_ : the full :class:`gfepanel.search.FitResult`
    """

    def __init__(
        self,
        n_groups: int = 2,
        n_starts: int = 3,
        itermax: int = 10,
        neighmax: int = 5,
        max_local_iters: int = 2,
        base_seed: int = 0,
        reference_location: int = 0,
        n_jobs: int = 1,
    ):
        self.n_groups = n_groups
        self.n_starts = n_starts
        self.itermax = itermax
        self.neighmax = neighmax
        self.max_local_iters = max_local_iters
        self.base_seed = base_seed
        self.reference_location = reference_location
        self.n_jobs = n_jobs

    def fit(self, data: PanelDataset, y=None):
        spec = DesignSpec(
            n_groups=self.n_groups, reference_location=self.reference_location
        )
        config = FitConfig(
            n_starts=self.n_starts,
            itermax=self.itermax,
            neighmax=self.neighmax,
            max_local_iters=self.max_local_iters,
            base_seed=self.base_seed,
        )
        result = multi_start_fit(data, spec, config, n_jobs=self.n_jobs)
        self.result_ = result
        self.theta_ = result.params.theta
        self.alpha_ = result.params.alpha
        self.mu_ = result.params.mu
        self.gamma_ = result.gamma.g
        self.sse_ = result.sse
        self._data_ref = data
        return self

    def predict(self, data: PanelDataset | None = None) -> np.ndarray:
        """Fitted values on the full (N, T) grid; NaN where the effect is undefined.

        ``data`` defaults to the training panel; an alternative panel must
        share the unit order and period axis of the training panel.
        """
        if not hasattr(self, "result_"):
            raise AttributeError("estimator is not fitted")
        if data is None:
            data = self._data_ref
        xb = (
            data.covariates @ self.theta_
            if data.n_covariates
            else np.zeros(data.mask.shape)
        )
        return xb + self.alpha_[self.gamma_] + self.mu_[data.locations][:, None]
