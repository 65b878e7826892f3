"""Score estimators: exact oracle, perturbed budgets, affine DSM fits."""

import numpy as np
import pytest

from difflab.distributions import (
    gmm_preset,
    point_mass,
    single_gaussian,
    standard_gaussian,
)
from difflab.errors import FitFailureError, InvalidInputError
from difflab.schedules import DiscretizationGrid, VarianceSchedule, build_uniform_grid
from difflab.score_models import (
    ExactScore,
    epsilon_budget,
    fit_dsm_affine,
    make_perturbed,
    weighted_score_error,
)

CONSTANT = VarianceSchedule("constant", None)


@pytest.fixture
def gauss_setup():
    dist = single_gaussian(np.array([0.5, -1.0]), np.array([[2.0, 0.4], [0.4, 1.0]]))
    grid = build_uniform_grid(0.05, 4.0, 8)
    return dist, grid, ExactScore(dist, CONSTANT, grid)


class TestExactScore:
    def test_matches_marginal_score(self, gauss_setup):
        dist, grid, exact = gauss_setup
        from difflab.distributions import forward_marginal

        x = np.random.default_rng(0).normal(size=(20, 2))
        for k in (1, 4, 8):
            m = forward_marginal(dist, CONSTANT, grid.points[k]).mixture
            np.testing.assert_allclose(exact.score_at(x, k), m.score(x), atol=1e-12)

    def test_affine_coefficients(self, gauss_setup):
        dist, grid, exact = gauss_setup
        x = np.random.default_rng(1).normal(size=(10, 2))
        for k in (1, 5):
            a_mat, b_vec = exact.affine_at(k)
            np.testing.assert_allclose(
                exact.score_at(x, k), x @ a_mat.T + b_vec, atol=1e-10
            )


class TestPerturbed:
    def test_zero_eps_recovers_exact(self, gauss_setup):
        _, _, exact = gauss_setup
        model = make_perturbed(exact, 0.0)
        x = np.random.default_rng(2).normal(size=(5, 2))
        np.testing.assert_array_equal(model.score_at(x, 3), exact.score_at(x, 3))

    def test_uniform_policy_exact_budget(self, gauss_setup):
        _, _, exact = gauss_setup
        model = make_perturbed(exact, 0.3)
        v, se = weighted_score_error(model, exact, n_mc=20, seed=0)
        assert v == pytest.approx(0.09, rel=1e-10)
        assert se == pytest.approx(0.0, abs=1e-12)

    def test_budget_invariant_both_policies(self, gauss_setup):
        dist, grid, exact = gauss_setup
        g_k = grid.step_g(CONSTANT)
        for policy in ("uniform", "sigma_scaled"):
            model = make_perturbed(exact, 0.25, policy=policy)
            weighted = np.sum(g_k * np.sum(model.biases ** 2, axis=1)) / g_k.sum()
            assert weighted == pytest.approx(0.25 ** 2, rel=1e-10)

    def test_sigma_scaled_ratio(self):
        # Two query points with sigma^2 = 1/2 and ~1: budgets in ratio 2:1.
        dist = standard_gaussian(2)
        grid = DiscretizationGrid(np.array([0.1, np.log(2.0), 25.0]))
        model = make_perturbed(ExactScore(dist, CONSTANT, grid), 0.5, policy="sigma_scaled")
        norms = np.sum(model.biases ** 2, axis=1)
        assert norms[0] / norms[1] == pytest.approx(2.0, rel=1e-6)

    def test_random_directions_budget(self, gauss_setup):
        _, _, exact = gauss_setup
        model = make_perturbed(exact, 0.4, random_directions=True, seed=7)
        v, _ = weighted_score_error(model, exact, n_mc=20, seed=0)
        assert v == pytest.approx(0.16, rel=1e-10)


class TestDSM:
    def test_gaussian_recovers_stationary_score(self):
        dist = standard_gaussian(2)
        grid = build_uniform_grid(0.1, 3.0, 6)
        n = 4000
        model = fit_dsm_affine(dist, grid, CONSTANT, n, seed=3)
        for k in range(1, grid.n_steps + 1):
            a_mat, b_vec = model.affine_at(k)
            assert np.max(np.abs(a_mat + np.eye(2))) < 5 / np.sqrt(n)
            assert np.max(np.abs(b_vec)) < 5 / np.sqrt(n)

    def test_point_mass_exact_recovery(self):
        grid = build_uniform_grid(0.1, 2.0, 4)
        model = fit_dsm_affine(point_mass(np.zeros(2)), grid, CONSTANT, 200, seed=4)
        for k in range(1, 5):
            a_mat, _ = model.affine_at(k)
            s2 = CONSTANT.sigma_sq(grid.points[k])
            np.testing.assert_allclose(a_mat, -np.eye(2) / s2, rtol=1e-6, atol=1e-8)

    def test_underdetermined_errors(self):
        grid = build_uniform_grid(0.1, 2.0, 4)
        with pytest.raises((FitFailureError, InvalidInputError)):
            fit_dsm_affine(standard_gaussian(3), grid, CONSTANT, 3, seed=5)

    def test_error_halves_when_n_quadruples(self):
        dist = single_gaussian(np.array([1.0, 0.0]), 2.0 * np.eye(2))
        grid = build_uniform_grid(0.1, 3.0, 5)
        exact = ExactScore(dist, CONSTANT, grid)

        def mean_op_err(n, seed):
            model = fit_dsm_affine(dist, grid, CONSTANT, n, seed=seed)
            errs = []
            for k in range(1, 6):
                a_f, b_f = model.affine_at(k)
                a_e, b_e = exact.affine_at(k)
                errs.append(np.linalg.norm(a_f - a_e, 2) + np.linalg.norm(b_f - b_e))
            return np.mean(errs)

        # Average over several fits to tame fit-to-fit noise.
        coarse = np.mean([mean_op_err(500, s) for s in range(8)])
        fine = np.mean([mean_op_err(2000, s) for s in range(8, 16)])
        assert 0.7 * 0.5 <= fine / coarse <= 1.3 * 0.5

    def test_weighted_error_rate_in_n(self):
        dist = standard_gaussian(2)
        grid = build_uniform_grid(0.1, 3.0, 6)
        exact = ExactScore(dist, CONSTANT, grid)
        ns = np.array([250, 500, 1000, 2000])
        errs = []
        for n in ns:
            model = fit_dsm_affine(dist, grid, CONSTANT, int(n), seed=11)
            v, _ = weighted_score_error(model, exact, n_mc=4000, seed=1)
            errs.append(v)
        from difflab.metrics import rate_fit

        slope, _ = rate_fit(ns, np.array(errs))
        assert -1.4 <= slope <= -0.6


class TestEpsilonBudget:
    def test_single_step_identity(self):
        # One-step grid: eps^2 = eps0^2 * sigma^2(t_1); ~eps0^2 for large t_1.
        grid = DiscretizationGrid(np.array([0.5, 30.0]))
        assert epsilon_budget(grid, CONSTANT, 0.3) == pytest.approx(
            0.09 * CONSTANT.sigma_sq(30.0), rel=1e-12
        )
        assert epsilon_budget(grid, CONSTANT, 0.3) == pytest.approx(0.09, rel=1e-6)

    def test_large_t0_lower_bound(self):
        # All sigma^2 >= 1/2 makes eps^2 >= eps0^2 / 2.
        grid = build_uniform_grid(np.log(2.0), 5.0, 6)
        assert epsilon_budget(grid, CONSTANT, 0.4) >= 0.16 / 2

    def test_monotone_under_refinement(self):
        coarse = build_uniform_grid(0.05, 4.0, 8)
        fine = build_uniform_grid(0.05, 4.0, 32)
        assert epsilon_budget(fine, CONSTANT, 0.3) <= epsilon_budget(coarse, CONSTANT, 0.3)
