"""Reverse-chain samplers: step kernels, law propagation, oracles."""

import numpy as np
import pytest

from difflab.distributions import (
    forward_marginal,
    point_mass,
    single_gaussian,
    standard_gaussian,
)
from difflab.errors import InvalidInputError, UnsupportedModelError
from difflab.metrics import w2_gaussian
from difflab.samplers import (
    GaussianLaw,
    SamplerConfig,
    propagate_affine_law,
    reference_chain,
    rescale_output,
    run_chain,
    step_ei,
    step_em,
)
from difflab.schedules import VarianceSchedule, build_uniform_grid
from difflab.score_models import ExactScore, make_perturbed

CONSTANT = VarianceSchedule("constant", None)


def make_config(scheme="ei", n=100, seed=0, delta=0.05, horizon=4.0, steps=8,
                dist=None):
    dist = dist if dist is not None else single_gaussian(
        np.array([1.0, -0.5]), 2.0 * np.eye(2)
    )
    grid = build_uniform_grid(delta, horizon, steps)
    model = ExactScore(dist, CONSTANT, grid)
    return SamplerConfig(scheme, grid, CONSTANT, model, seed, n), dist


class TestStepKernels:
    def test_em_update_examples(self):
        z = np.zeros(2)
        np.testing.assert_allclose(step_em(np.zeros(2), 0.3, np.zeros(2), z), 0.0)
        y = np.array([1.0, 0.0])
        s = np.array([-1.0, 0.0])
        np.testing.assert_allclose(step_em(y, 0.1, s, z), [0.95, 0.0])
        z1 = np.array([0.7, -0.2])
        np.testing.assert_allclose(
            step_em(np.zeros(2), 0.25, np.zeros(2), z1), np.sqrt(0.25) * z1
        )

    def test_em_identity_limit(self):
        y = np.array([0.4, -1.1])
        out = step_em(y, 1e-14, np.array([2.0, 1.0]), np.zeros(2))
        np.testing.assert_allclose(out, y, atol=1e-12)

    def test_ei_pure_expansion(self):
        y = np.array([1.0, 2.0])
        np.testing.assert_allclose(
            step_ei(y, 0.3, np.zeros(2), np.zeros(2)), np.exp(0.15) * y
        )

    def test_ei_stationary_variance_identity(self):
        # Un-frozen kernel with s = -y: e^{-G} + (1 - e^{-G}) = 1.
        for g_step in (0.1, 0.5, 2.0):
            assert np.exp(-g_step) * 1.0 + (1.0 - np.exp(-g_step)) == pytest.approx(1.0)

    def test_ei_em_taylor_agreement(self):
        # ||step_ei - step_em|| <= 2 (||y|| + ||s|| + ||z||) G^2 for moderate G.
        rng = np.random.default_rng(0)
        for _ in range(200):
            g_step = rng.uniform(0.05, 0.5)
            y, s, z = rng.normal(size=(3, 3))
            diff = np.linalg.norm(step_ei(y, g_step, s, z) - step_em(y, g_step, s, z))
            bound = 2 * (np.linalg.norm(y) + np.linalg.norm(s) + np.linalg.norm(z))
            assert diff <= bound * g_step ** 2

    def test_small_step_quadratic_difference(self):
        y = np.array([0.5, -0.3])
        s = np.array([-0.2, 0.1])
        z = np.array([1.0, -1.0])
        diffs = []
        for g_step in (1e-2, 1e-3, 1e-4):
            d = np.linalg.norm(step_ei(y, g_step, s, z) - step_em(y, g_step, s, z))
            diffs.append(d / g_step ** 2)
        assert max(diffs) <= 50.0  # bounded constant; difference is O(G^2 + G^{3/2})

    def test_nonfinite_input_errors(self):
        with pytest.raises(InvalidInputError):
            step_em(np.array([np.nan, 0.0]), 0.1, np.zeros(2), np.zeros(2))
        with pytest.raises(InvalidInputError):
            step_ei(np.zeros(2), 0.1, np.array([np.inf, 0.0]), np.zeros(2))


class TestRunChain:
    def test_determinism(self):
        cfg, _ = make_config(seed=42)
        np.testing.assert_array_equal(run_chain(cfg), run_chain(cfg))

    def test_seed_changes_output(self):
        cfg_a, _ = make_config(seed=1)
        cfg_b, _ = make_config(seed=2)
        assert not np.array_equal(run_chain(cfg_a), run_chain(cfg_b))

    def test_error_improves_with_refinement(self):
        # W2 of the fitted output Gaussian to p_delta: N = 1024 beats N = 64.
        dist = single_gaussian(np.zeros(2), 2.0 * np.eye(2))
        errs = {}
        for steps in (64, 1024):
            cfg, _ = make_config("ei", n=20_000, seed=3, delta=0.01, horizon=8.0,
                                 steps=steps, dist=dist)
            out = run_chain(cfg)
            target = forward_marginal(dist, CONSTANT, 0.01).mixture
            errs[steps] = w2_gaussian(
                GaussianLaw(out.mean(0), np.cov(out.T)),
                GaussianLaw(target.means[0], target.covs[0]),
            )
        assert errs[1024] < errs[64]

    def test_matches_target_law(self):
        cfg, dist = make_config("em", n=50_000, seed=4, steps=64)
        out = run_chain(cfg)
        target = forward_marginal(dist, CONSTANT, cfg.grid.delta).mixture
        assert np.abs(out.mean(0) - target.means[0]).max() < 0.05
        assert np.abs(np.cov(out.T) - target.covs[0]).max() < 0.1


class TestAffineLaw:
    def test_zero_steps_prior(self):
        from difflab.schedules import DiscretizationGrid

        grid = DiscretizationGrid(np.array([1.0]))
        dist = standard_gaussian(2)
        cfg = SamplerConfig("ei", grid, CONSTANT, ExactScore(dist, CONSTANT, grid), 0, 10)
        law = propagate_affine_law(cfg)
        np.testing.assert_allclose(law.mean, 0.0)
        np.testing.assert_allclose(law.cov, np.eye(2))
        # run_chain with zero steps returns the prior draws unchanged.
        out = run_chain(cfg)
        assert out.shape == (10, 2)
        np.testing.assert_array_equal(
            out, np.random.default_rng(0).standard_normal((10, 2))
        )

    def test_stationary_covariance_defect(self):
        # Exact score on N(0, I): covariance stays within O(sum G_k^2) of I.
        dist = standard_gaussian(2)
        for steps in (16, 64):
            cfg, _ = make_config("ei", steps=steps, dist=dist)
            law = propagate_affine_law(cfg)
            g_k = cfg.grid.step_g(CONSTANT)
            defect = np.max(np.abs(law.cov - np.eye(2)))
            assert defect <= 2.0 * np.sum(g_k ** 2)

    def test_matches_empirical_law(self):
        rng = np.random.default_rng(5)
        n = 100_000
        for trial in range(10):
            scheme = "em" if trial % 2 else "ei"
            steps = int(rng.integers(4, 16))
            delta = float(rng.uniform(0.01, 0.2))
            horizon = float(rng.uniform(2.0, 6.0))
            mean = rng.normal(size=2)
            scale = float(rng.uniform(0.5, 3.0))
            dist = single_gaussian(mean, scale * np.eye(2))
            grid = build_uniform_grid(delta, horizon, steps)
            model = ExactScore(dist, CONSTANT, grid)
            cfg = SamplerConfig(scheme, grid, CONSTANT, model, int(rng.integers(1e6)), n)
            law = propagate_affine_law(cfg)
            out = run_chain(cfg)
            sd = np.sqrt(np.diag(law.cov))
            np.testing.assert_array_less(
                np.abs(out.mean(0) - law.mean), 4 * sd / np.sqrt(n)
            )
            cov_se = np.sqrt(
                (np.outer(np.diag(law.cov), np.diag(law.cov)) + law.cov ** 2) / n
            )
            np.testing.assert_array_less(np.abs(np.cov(out.T) - law.cov), 6 * cov_se)

    def test_perturbed_affine_supported(self):
        cfg, _ = make_config()
        pert = make_perturbed(cfg.score_model, 0.2)
        cfg2 = SamplerConfig(cfg.scheme, cfg.grid, CONSTANT, pert, 0, 10)
        law = propagate_affine_law(cfg2)
        assert np.all(np.isfinite(law.mean))

    def test_nonaffine_rejected(self):
        from difflab.distributions import gmm_preset

        dist = gmm_preset("two_component", 2)
        grid = build_uniform_grid(0.05, 4.0, 8)
        cfg = SamplerConfig("ei", grid, CONSTANT, ExactScore(dist, CONSTANT, grid), 0, 10)
        with pytest.raises(UnsupportedModelError):
            propagate_affine_law(cfg)


class TestRescaleAndReference:
    def test_rescale_identity_at_zero(self):
        x = np.random.default_rng(6).normal(size=(5, 2))
        np.testing.assert_array_equal(rescale_output(x, 0.0, CONSTANT), x)

    def test_rescale_constant_g(self):
        x = np.ones((2, 3))
        np.testing.assert_allclose(
            rescale_output(x, 0.2, CONSTANT), np.exp(0.1) * np.ones((2, 3))
        )

    def test_rescale_law_pushforward(self):
        law = GaussianLaw(np.array([1.0, 2.0]), np.diag([1.0, 4.0]))
        out = rescale_output(law, 0.2, CONSTANT)
        np.testing.assert_allclose(out.mean, np.exp(0.1) * law.mean)
        np.testing.assert_allclose(out.cov, np.exp(0.2) * law.cov)

    def test_early_stopping_pushforward_w2(self):
        # Point-mass base: W2^2(P, M_sharp p_delta) = d e^{G_delta} sigma_delta^2
        # <= 2 d G_delta for G_delta <= 1/2.
        d = 3
        for delta in (0.05, 0.2, 0.5):
            g_delta = CONSTANT.big_g(delta)
            w2_sq = d * np.exp(g_delta) * CONSTANT.sigma_sq(delta)
            assert w2_sq <= 2 * d * g_delta

    def test_reference_refine_one_identical(self):
        cfg, _ = make_config(seed=9)
        np.testing.assert_array_equal(reference_chain(cfg, 1), run_chain(cfg))

    @staticmethod
    def _moment_w2(a, b):
        return w2_gaussian(
            GaussianLaw(a.mean(0), np.cov(a.T)), GaussianLaw(b.mean(0), np.cov(b.T))
        )

    def test_reference_error_decreases_with_n(self):
        # Shifted target keeps the discretization error above the MC floor.
        dist = single_gaussian(np.array([10.0, 0.0]), np.eye(2) * 1.5)
        for scheme in ("em", "ei"):
            prev = None
            for steps in (8, 16, 32):
                cfg, _ = make_config(scheme, n=20_000, seed=11, steps=steps, dist=dist)
                err = self._moment_w2(run_chain(cfg), reference_chain(cfg, 8))
                if prev is not None:
                    assert err < prev
                prev = err

    def test_ei_closer_than_em_on_shifted_target(self):
        # ||mean|| = 50 exercises the second-moment separation: EI at a coarse
        # grid stays near the refined reference, EM drifts.
        dist = single_gaussian(np.array([50.0, 0.0]), np.eye(2))
        errs = {}
        for scheme in ("em", "ei"):
            cfg, _ = make_config(scheme, n=20_000, seed=13, steps=16, dist=dist)
            errs[scheme] = self._moment_w2(run_chain(cfg), reference_chain(cfg, 8))
        assert errs["ei"] < errs["em"]
