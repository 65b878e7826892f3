"""Gaussian mixtures with exact forward marginals, scores, and Hessians.

Point masses are represented as zero-covariance components.  Under the
forward Ornstein-Uhlenbeck flow a mixture stays a mixture: means contract by
alpha_t and covariances become alpha_t^2 Sigma + sigma_t^2 I, so every
marginal quantity below is available in closed form.  Responsibilities are
computed in log space to survive far-tail evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError, NoDensityError
from .schedules import VarianceSchedule

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of Gaussians; weights (m,), means (m, d), covs (m, d, d)."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covs, dtype=float)
        if cov.ndim == 2:
            cov = cov[None]
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cov)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise InvalidInputError("weights must be positive and sum to 1")
        m, d = mu.shape
        if w.shape != (m,) or cov.shape != (m, d, d):
            raise InvalidInputError("inconsistent component shapes")
        if not np.allclose(cov, np.swapaxes(cov, 1, 2), atol=1e-10):
            raise InvalidInputError("covariances must be symmetric")
        eigs = np.linalg.eigvalsh(cov)
        if np.any(eigs < -1e-10):
            raise InvalidInputError("covariances must be PSD")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.size

    def second_moment(self) -> float:
        """M2 = sum_i w_i (||mu_i||^2 + tr Sigma_i)."""
        return float(
            np.sum(
                self.weights
                * (np.sum(self.means ** 2, axis=1) + np.trace(self.covs, axis1=1, axis2=2))
            )
        )

    # -- density machinery ------------------------------------------------

    def _chol_factors(self):
        try:
            return np.linalg.cholesky(self.covs)
        except np.linalg.LinAlgError:
            raise NoDensityError(
                "mixture has a singular covariance component; no density exists"
            ) from None

    def _component_log_pdf_from(self, diffs, chol, d):
        # Solve L y = diff per component via triangular solves, batched.
        from scipy.linalg import solve_triangular

        m = self.n_components
        out = np.empty((m, diffs.shape[1]))
        for i in range(m):
            y = solve_triangular(chol[i], diffs[i].T, lower=True)
            quad = np.sum(y ** 2, axis=0)
            logdet = 2.0 * np.sum(np.log(np.diag(chol[i])))
            out[i] = -0.5 * (quad + logdet + d * np.log(2 * np.pi))
        return out

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Log mixture density at each row of x (shape (n,) for (n, d) input)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        chol = self._chol_factors()
        diffs = x[None, :, :] - self.means[:, None, :]
        comp = self._component_log_pdf_from(diffs, chol, self.dim)
        return logsumexp(comp + np.log(self.weights)[:, None], axis=0)

    def responsibilities(self, x: np.ndarray) -> np.ndarray:
        """Posterior component probabilities r_i(x); shape (m, n)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        chol = self._chol_factors()
        diffs = x[None, :, :] - self.means[:, None, :]
        comp = self._component_log_pdf_from(diffs, chol, self.dim)
        logw = comp + np.log(self.weights)[:, None]
        return np.exp(logw - logsumexp(logw, axis=0, keepdims=True))

    def score(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the log density; same shape as x."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        r = self.responsibilities(xb)  # (m, n)
        prec = np.linalg.inv(self.covs)
        diffs = xb[None, :, :] - self.means[:, None, :]  # (m, n, d)
        comp_scores = -np.einsum("mij,mnj->mni", prec, diffs)
        s = np.einsum("mn,mni->ni", r, comp_scores)
        return s[0] if single else s

    def hessian_log_density(self, x: np.ndarray) -> np.ndarray:
        """Hessian of the log density; shape (d, d) or (n, d, d)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        r = self.responsibilities(xb)  # (m, n)
        prec = np.linalg.inv(self.covs)
        diffs = xb[None, :, :] - self.means[:, None, :]
        g = -np.einsum("mij,mnj->mni", prec, diffs)  # per-component scores
        s = np.einsum("mn,mni->ni", r, g)  # mixture score
        h = -np.einsum("mn,mij->nij", r, prec)
        h += np.einsum("mn,mni,mnj->nij", r, g, g)
        h -= np.einsum("ni,nj->nij", s, s)
        return h[0] if single else h

    # -- sampling ---------------------------------------------------------

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n i.i.d. points; zero-covariance components yield their mean."""
        idx = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        # Symmetric PSD square roots (works for zero covariance too).
        eigval, eigvec = np.linalg.eigh(self.covs)
        roots = np.einsum(
            "mij,mj,mkj->mik", eigvec, np.sqrt(np.clip(eigval, 0.0, None)), eigvec
        )
        return self.means[idx] + np.einsum("nij,nj->ni", roots[idx], z)


@dataclass(frozen=True)
class ForwardMarginal:
    """The law of x_t under the forward flow; itself a Gaussian mixture."""

    base: GaussianMixture
    schedule: VarianceSchedule
    t: float

    @property
    def mixture(self) -> GaussianMixture:
        a = self.schedule.alpha_coef(0.0, self.t)
        s2 = self.schedule.sigma_sq(self.t)
        d = self.base.dim
        covs = a ** 2 * self.base.covs + s2 * np.eye(d)[None]
        return GaussianMixture(self.base.weights, a * self.base.means, covs)

    def log_density(self, x):
        return self.mixture.log_density(x)

    def score(self, x):
        return self.mixture.score(x)

    def hessian_log_density(self, x):
        return self.mixture.hessian_log_density(x)


def forward_marginal(
    dist: GaussianMixture, schedule: VarianceSchedule, t: float
) -> ForwardMarginal:
    """The forward-time marginal p_t of the mixture."""
    if t < 0:
        raise InvalidInputError("t must be nonnegative")
    return ForwardMarginal(dist, schedule, t)


def second_moment(dist: GaussianMixture) -> float:
    return dist.second_moment()


def sample_forward(
    dist: GaussianMixture,
    schedule: VarianceSchedule,
    t: float,
    n: int,
    seed: int,
) -> np.ndarray:
    """Draw n samples of x_t = alpha_t x_0 + sigma_t z, deterministic in seed."""
    rng = np.random.default_rng(seed)
    x0 = dist.sample(n, rng)
    a = schedule.alpha_coef(0.0, t)
    sig = np.sqrt(schedule.sigma_sq(t))
    return a * x0 + sig * rng.standard_normal(x0.shape)


def gaussian_kl_to_standard(mean: np.ndarray, cov: np.ndarray) -> float:
    """Closed-form KL(N(m, C) || N(0, I)) = (tr C - d - log det C + ||m||^2) / 2."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = mean.size
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise InvalidInputError("covariance must be positive definite")
    return 0.5 * (np.trace(cov) - d - logdet + float(mean @ mean))


def kl_to_standard_gaussian(
    marginal: ForwardMarginal,
    n_mc: int = 100_000,
    seed: int = 0,
) -> tuple[float, float]:
    """KL(p_t || gamma_d) with a standard error (0 for the closed-form path).

    Single-Gaussian marginals use the closed form; mixtures use Monte Carlo
    with the analytic log densities of both sides.
    """
    mix = marginal.mixture
    if mix.n_components == 1:
        return gaussian_kl_to_standard(mix.means[0], mix.covs[0]), 0.0
    rng = np.random.default_rng(seed)
    x = mix.sample(n_mc, rng)
    d = mix.dim
    log_gamma = -0.5 * (np.sum(x ** 2, axis=1) + d * np.log(2 * np.pi))
    ratio = mix.log_density(x) - log_gamma
    return float(np.mean(ratio)), float(np.std(ratio, ddof=1) / np.sqrt(n_mc))


# -- constructors ---------------------------------------------------------


def single_gaussian(mean, cov) -> GaussianMixture:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = float(cov) * np.eye(mean.size)
    return GaussianMixture(np.array([1.0]), mean[None], cov[None])


def standard_gaussian(d: int) -> GaussianMixture:
    return single_gaussian(np.zeros(d), np.eye(d))


def point_mass(mean) -> GaussianMixture:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return GaussianMixture(
        np.array([1.0]), mean[None], np.zeros((1, mean.size, mean.size))
    )


def two_point(d: int, mu: float) -> GaussianMixture:
    """Equal-weight components at +/- mu e_1 in R^d with identity covariance."""
    m = np.zeros((2, d))
    m[0, 0] = mu
    m[1, 0] = -mu
    return GaussianMixture(np.array([0.5, 0.5]), m, np.stack([np.eye(d)] * 2))


def gmm_preset(name: str, d: int = 2) -> GaussianMixture:
    """Named mixtures used by the experiment presets."""
    if name == "three_component":
        means = np.zeros((3, d))
        means[0, 0] = 2.0
        means[1, 0] = -2.0
        means[2, min(1, d - 1)] = 1.5
        covs = np.stack([0.3 * np.eye(d), 0.5 * np.eye(d), 0.2 * np.eye(d)])
        return GaussianMixture(np.array([0.4, 0.35, 0.25]), means, covs)
    if name == "two_component":
        means = np.zeros((2, d))
        means[0, 0] = 1.5
        means[1, 0] = -1.5
        covs = np.stack([0.4 * np.eye(d), 0.4 * np.eye(d)])
        return GaussianMixture(np.array([0.5, 0.5]), means, covs)
    raise InvalidInputError(f"unknown mixture preset {name!r}")
