"""Initialization, assignment, local search, refinement and the full search."""

import numpy as np
import pytest

from gfepanel.errors import NoFeasibleGroupError
from gfepanel.ols import DesignSpec, ols_update
from gfepanel.panel import FitConfig, GroupAssignment, ModelParams, objective
from gfepanel.search import (
    assign_groups,
    initialize,
    local_search,
    multi_start_fit,
    refine,
    stream_seed,
    vns_fit,
)

from conftest import make_panel, random_panel


class TestStreamSeed:
    def test_xor_rule(self):
        assert stream_seed(0, 0) == 0
        assert stream_seed(0b1010, 0b0110) == 0b1100
        assert stream_seed(7, 0) == 7


class TestInitialize:
    def test_period_mean_residuals_single_group(self):
        # N=2, T=2, K=0, L=1: alpha0(t) = period means of y.
        data = make_panel([[1.0, 3.0], [3.0, 7.0]])
        params, gamma = initialize(data, 1, DesignSpec(n_groups=1), seed=0)
        np.testing.assert_allclose(params.alpha, [[2.0, 5.0]], atol=1e-12)
        assert gamma.g.tolist() == [0, 0]

    def test_identical_rows_tie_break_to_group_zero(self, rng):
        data = random_panel(rng, n=6, t=3, k=1)
        params, gamma = initialize(data, 3, DesignSpec(n_groups=3), seed=0)
        # All alpha rows identical -> every unit in group 0 by tie-break.
        assert np.all(params.alpha[0] == params.alpha[1])
        assert gamma.g.tolist() == [0] * 6

    def test_deterministic_regardless_of_seed(self, rng):
        data = random_panel(rng, n=6, t=3, k=1)
        p1, g1 = initialize(data, 2, DesignSpec(n_groups=2), seed=1)
        p2, g2 = initialize(data, 2, DesignSpec(n_groups=2), seed=99)
        np.testing.assert_array_equal(p1.alpha, p2.alpha)
        np.testing.assert_array_equal(g1.g, g2.g)


class TestAssignGroups:
    def test_single_group_constant(self, rng):
        data = random_panel(rng, n=4, t=3, k=0, n_locations=1)
        params = ModelParams(
            theta=np.empty(0), alpha=np.zeros((1, 3)), mu=np.zeros(1)
        )
        assert assign_groups(data, params).g.tolist() == [0] * 4

    def test_picks_strictly_better_group(self):
        data = make_panel([[5.0, 5.0]])
        params = ModelParams(
            theta=np.empty(0),
            alpha=np.array([[0.0, 0.0], [5.0, 5.0]]),
            mu=np.zeros(1),
        )
        assert assign_groups(data, params).g.tolist() == [1]

    def test_undefined_candidate_skipped(self):
        data = make_panel([[5.0, 5.0]], mask=[[True, False]])
        params = ModelParams(
            theta=np.empty(0),
            alpha=np.array([[0.0, 0.0], [np.nan, 0.0]]),
            mu=np.zeros(1),
        )
        # Group 1 is undefined at t=0 where the unit is observed -> group 0.
        assert assign_groups(data, params).g.tolist() == [0]

    def test_no_feasible_group_raises(self):
        data = make_panel([[5.0]])
        params = ModelParams(
            theta=np.empty(0), alpha=np.array([[np.nan], [np.nan]]), mu=np.zeros(1)
        )
        with pytest.raises(NoFeasibleGroupError) as exc:
            assign_groups(data, params)
        assert exc.value.units == ["u0"]


class TestLocalSearch:
    def test_fixed_point_unchanged(self, rng):
        data = random_panel(rng, n=6, t=3, k=0, n_locations=1)
        params = ModelParams(
            theta=np.empty(0), alpha=rng.standard_normal((2, 3)), mu=np.zeros(1)
        )
        gamma = assign_groups(data, params)
        res = local_search(data, params, gamma, max_passes=3)
        np.testing.assert_array_equal(res.gamma.g, gamma.g)
        assert res.n_moves == 0

    def test_zero_passes_is_identity(self, rng):
        data = random_panel(rng, n=6, t=3, k=0, n_locations=1)
        params = ModelParams(
            theta=np.empty(0), alpha=rng.standard_normal((2, 3)), mu=np.zeros(1)
        )
        gamma = GroupAssignment(rng.integers(0, 2, size=6), 2)
        res = local_search(data, params, gamma, max_passes=0)
        np.testing.assert_array_equal(res.gamma.g, gamma.g)

    def test_single_improving_move_found_by_brute_force(self):
        # Three units, two groups; construct so exactly one unit is misplaced.
        data = make_panel([[0.0, 0.0], [0.1, -0.1], [5.0, 5.0]])
        params = ModelParams(
            theta=np.empty(0),
            alpha=np.array([[0.0, 0.0], [5.0, 5.0]]),
            mu=np.zeros(1),
        )
        gamma = GroupAssignment(np.array([0, 0, 0]), 2)
        res = local_search(data, params, gamma, max_passes=5)
        assert res.gamma.g.tolist() == [0, 0, 1]
        assert res.n_moves == 1
        # Brute force: the returned assignment is per-unit optimal.
        best_sse = objective(data, params, res.gamma)
        for code in range(8):
            alt = GroupAssignment(np.array([(code >> i) & 1 for i in range(3)]), 2)
            assert best_sse <= objective(data, params, alt) + 1e-12

    def test_objective_non_increasing(self, rng):
        for _ in range(10):
            data = random_panel(rng, n=8, t=4, k=0, n_locations=1)
            params = ModelParams(
                theta=np.empty(0), alpha=rng.standard_normal((3, 4)), mu=np.zeros(1)
            )
            gamma = GroupAssignment(rng.integers(0, 3, size=8), 3)
            before = objective(data, params, gamma)
            res = local_search(data, params, gamma, max_passes=2)
            assert objective(data, params, res.gamma) <= before + 1e-12


class TestRefine:
    def test_monotone_stages(self, rng):
        for _ in range(10):
            data = random_panel(rng, n=10, t=4, k=1)
            gamma = GroupAssignment(rng.integers(0, 2, size=10), 2)
            stages = []
            refine(
                data, gamma, DesignSpec(n_groups=2), max_local_iters=2,
                monitor=stages.append,
            )
            (s1, s2, s3), = stages
            assert s2 <= s1 + 1e-9 * max(1.0, s1)
            assert s3 <= s2 + 1e-9 * max(1.0, s2)

    def test_fixed_point_at_local_optimum(self, rng):
        data = random_panel(rng, n=8, t=3, k=0)
        spec = DesignSpec(n_groups=2)
        gamma = GroupAssignment(rng.integers(0, 2, size=8), 2)
        r1 = refine(data, gamma, spec, max_local_iters=10)
        r2 = refine(data, r1.gamma, spec, max_local_iters=10)
        assert r2.sse == pytest.approx(r1.sse, rel=1e-12)
        np.testing.assert_array_equal(r1.gamma.g, r2.gamma.g)

    def test_local_iteration_cap_honored(self, rng):
        data = random_panel(rng, n=10, t=4, k=0)
        gamma = GroupAssignment(rng.integers(0, 3, size=10), 3)
        params = ols_update(data, gamma, DesignSpec(n_groups=3))
        res = local_search(data, params, gamma, max_passes=2)
        assert res.n_passes <= 2


class TestVnsFit:
    def test_single_group_equals_pooled(self, rng):
        data = random_panel(rng, n=8, t=3, k=1)
        spec = DesignSpec(n_groups=1)
        fit = vns_fit(data, spec, FitConfig(n_starts=1, itermax=2), 0)
        pooled = ols_update(data, GroupAssignment(np.zeros(8, dtype=int), 1), spec)
        assert fit.sse == pytest.approx(
            objective(data, pooled, fit.gamma), rel=1e-12
        )

    def test_determinism(self, rng):
        data = random_panel(rng, n=10, t=4, k=1)
        spec = DesignSpec(n_groups=3)
        config = FitConfig(n_starts=1, base_seed=42)
        f1 = vns_fit(data, spec, config, 0)
        f2 = vns_fit(data, spec, config, 0)
        assert f1.sse == f2.sse
        np.testing.assert_array_equal(f1.gamma.g, f2.gamma.g)
        np.testing.assert_array_equal(f1.params.theta, f2.params.theta)

    def test_sse_equals_objective_at_return(self, rng):
        data = random_panel(rng, n=10, t=4, k=1)
        fit = vns_fit(data, DesignSpec(n_groups=2), FitConfig(), 0)
        assert fit.sse == pytest.approx(
            objective(data, fit.params, fit.gamma), rel=1e-9
        )


class TestMultiStart:
    def test_one_start_matches_vns(self, rng):
        data = random_panel(rng, n=8, t=3, k=1)
        spec = DesignSpec(n_groups=2)
        config = FitConfig(n_starts=1, base_seed=3)
        assert multi_start_fit(data, spec, config).sse == vns_fit(data, spec, config, 0).sse

    def test_tie_break_lowest_start(self, rng):
        # G=1 leaves no partition freedom: all starts tie exactly.
        data = random_panel(rng, n=6, t=3, k=0, n_locations=1)
        fit = multi_start_fit(data, DesignSpec(n_groups=1), FitConfig(n_starts=4))
        assert fit.start_index == 0

    def test_parallel_matches_sequential(self, rng):
        data = random_panel(rng, n=10, t=4, k=1)
        spec = DesignSpec(n_groups=2)
        config = FitConfig(n_starts=3, base_seed=5)
        seq = multi_start_fit(data, spec, config, n_jobs=1)
        par = multi_start_fit(data, spec, config, n_jobs=2)
        assert seq.sse == par.sse
        np.testing.assert_array_equal(seq.gamma.g, par.gamma.g)

    def test_more_starts_never_worse(self, rng):
        for seed in range(5):
            data = random_panel(rng, n=10, t=4, k=1)
            spec = DesignSpec(n_groups=3)
            few = multi_start_fit(data, spec, FitConfig(n_starts=2, base_seed=seed))
            many = multi_start_fit(data, spec, FitConfig(n_starts=5, base_seed=seed))
            assert many.sse <= few.sse + 1e-12
