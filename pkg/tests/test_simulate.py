"""Synthetic data generation: determinism, rotation designs, separation."""

import numpy as np
import pytest

from gfepanel.errors import InfeasibleRotationError
from gfepanel.panel import objective
from gfepanel.simulate import DgpSpec, generate, separation


def base_spec(**overrides):
    defaults = dict(
        n_units=30, n_periods=5, n_groups=2, n_covariates=1, n_locations=2,
        theta=(1.0,), alpha=((0.0,) * 5, (2.0,) * 5), mu=(0.0, 0.5),
        noise_sd=0.5, rotation="full", seed=7,
    )
    defaults.update(overrides)
    return DgpSpec(**defaults)


class TestGenerate:
    def test_noiseless_truth_has_zero_objective(self):
        data, gamma, params = generate(base_spec(noise_sd=0.0))
        # Tiny nonzero values can appear from reordering the additive terms.
        assert objective(data, params, gamma) <= 1e-24

    def test_window_rotation_consecutive_runs(self):
        spec = base_spec(
            n_units=50, n_periods=10,
            alpha=((0.0,) * 10, (2.0,) * 10),
            rotation="window", window_length=3,
        )
        data, _, _ = generate(spec)
        for i in range(data.n_units):
            obs = np.nonzero(data.mask[i])[0]
            assert len(obs) == 3
            assert obs[-1] - obs[0] == 2  # consecutive

    def test_window_covers_all_periods(self):
        spec = base_spec(
            n_units=50, n_periods=10,
            alpha=((0.0,) * 10, (2.0,) * 10),
            rotation="window", window_length=3,
        )
        data, _, _ = generate(spec)
        assert data.mask.any(axis=0).all()

    def test_seed_determinism_bit_identical(self):
        d1, g1, p1 = generate(base_spec(seed=99))
        d2, g2, p2 = generate(base_spec(seed=99))
        np.testing.assert_array_equal(d1.outcome, d2.outcome)
        np.testing.assert_array_equal(d1.mask, d2.mask)
        np.testing.assert_array_equal(d1.covariates, d2.covariates)
        np.testing.assert_array_equal(g1.g, g2.g)

    def test_different_seeds_differ(self):
        d1, _, _ = generate(base_spec(seed=1))
        d2, _, _ = generate(base_spec(seed=2))
        assert not np.array_equal(d1.outcome, d2.outcome)

    def test_random_rotation_min_two_observations(self):
        spec = base_spec(rotation="random", p_obs=0.5, n_units=100)
        data, _, _ = generate(spec)
        assert (data.mask.sum(axis=1) >= 2).all()

    def test_infeasible_rotation_raises(self):
        spec = base_spec(
            n_units=20, n_periods=3, rotation="random", p_obs=0.003,
            alpha=((0.0,) * 3, (2.0,) * 3),
        )
        with pytest.raises(InfeasibleRotationError):
            generate(spec)

    def test_noise_variance_close_to_sigma_squared(self):
        spec = base_spec(n_units=2000, n_periods=10, noise_sd=0.7,
                         alpha=((0.0,) * 10, (2.0,) * 10), seed=5)
        data, gamma, params = generate(spec)
        eps = (
            data.outcome
            - data.covariates @ params.theta
            - params.alpha[gamma.g]
            - params.mu[data.locations][:, None]
        )
        assert np.var(eps) == pytest.approx(0.49, rel=0.05)

    def test_group_weights_respected(self):
        spec = base_spec(n_units=4000, group_weights=(0.9, 0.1), seed=2)
        _, gamma, _ = generate(spec)
        share = np.mean(gamma.g == 0)
        assert share == pytest.approx(0.9, abs=0.03)


class TestSpecValidation:
    def test_alpha_shape_checked(self):
        with pytest.raises(ValueError):
            base_spec(alpha=((0.0,) * 4, (2.0,) * 4))

    def test_window_length_bounds(self):
        with pytest.raises(ValueError):
            base_spec(rotation="window", window_length=1)

    def test_mu_reference_zero(self):
        with pytest.raises(ValueError):
            base_spec(mu=(0.1, 0.5))


class TestSeparation:
    def test_identical_rows_zero(self):
        assert separation(np.zeros((2, 4)), 1.0) == 0.0

    def test_constant_gap(self):
        alpha = np.vstack([np.zeros(4), np.full(4, 3.0)])
        assert separation(alpha, 1.0) == pytest.approx(3.0)

    def test_sigma_zero_infinite(self):
        alpha = np.vstack([np.zeros(4), np.full(4, 3.0)])
        assert separation(alpha, 0.0) == float("inf")

    def test_minimum_over_pairs(self):
        alpha = np.vstack([np.zeros(4), np.full(4, 1.0), np.full(4, 5.0)])
        assert separation(alpha, 0.5) == pytest.approx(2.0)
