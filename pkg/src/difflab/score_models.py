"""Score estimators with controlled error.

Three families, all defined at the grid points t_1..t_N only (samplers never
query off-grid times, except the refined reference chain which uses the exact
oracle directly):

* exact: the analytic mixture score of the forward marginal.
* perturbed: exact plus a constant per-gridpoint bias chosen so the weighted
  average error equals a prescribed eps0^2 exactly.
* dsm_affine: per-gridpoint affine map A_k x + b_k fitted by closed-form
  least squares on the denoising regression target (alpha x0 - x_t)/sigma^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import GaussianMixture, forward_marginal, sample_forward
from .errors import FitFailureError, InvalidParameterError, UnsupportedModelError
from .schedules import DiscretizationGrid, VarianceSchedule


@dataclass(frozen=True)
class ExactScore:
    """Oracle score: the analytic score of p_{t_k} from the mixture."""

    dist: GaussianMixture
    schedule: VarianceSchedule
    grid: DiscretizationGrid
    _marginals: dict = field(default_factory=dict, repr=False, compare=False)

    kind = "exact"

    @property
    def dim(self) -> int:
        return self.dist.dim

    def _marginal(self, t: float):
        if t not in self._marginals:
            self._marginals[t] = forward_marginal(self.dist, self.schedule, t).mixture
        return self._marginals[t]

    def score_at(self, x: np.ndarray, k: int) -> np.ndarray:
        """Score at grid index k (1..N, forward time t_k)."""
        return self.at_time(x, float(self.grid.points[k]))

    def at_time(self, x: np.ndarray, t: float) -> np.ndarray:
        """Score at an arbitrary forward time (used by the refined reference)."""
        return self._marginal(t).score(x)

    def affine_at(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(A_k, b_k) with s(x) = A_k x + b_k; only for single-Gaussian data."""
        if self.dist.n_components != 1:
            raise UnsupportedModelError("exact score is affine only for Gaussian data")
        mix = self._marginal(float(self.grid.points[k]))
        prec = np.linalg.inv(mix.covs[0])
        return -prec, prec @ mix.means[0]


@dataclass(frozen=True)
class PerturbedScore:
    """Exact oracle plus deterministic constant bias c_k per grid point."""

    exact: ExactScore
    biases: np.ndarray  # (N, d), row k-1 is c_k

    kind = "perturbed"

    @property
    def dim(self) -> int:
        return self.exact.dim

    @property
    def grid(self) -> DiscretizationGrid:
        return self.exact.grid

    def score_at(self, x: np.ndarray, k: int) -> np.ndarray:
        return self.exact.score_at(x, k) + self.biases[k - 1]

    def affine_at(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.exact.affine_at(k)
        return a, b + self.biases[k - 1]


@dataclass(frozen=True)
class DSMAffineScore:
    """Fitted affine score s(x, t_k) = A_k x + b_k, defined at grid points."""

    grid: DiscretizationGrid
    a_mats: np.ndarray  # (N, d, d)
    b_vecs: np.ndarray  # (N, d)
    n_fit: int

    kind = "dsm_affine"

    @property
    def dim(self) -> int:
        return self.b_vecs.shape[1]

    def score_at(self, x: np.ndarray, k: int) -> np.ndarray:
        return x @ self.a_mats[k - 1].T + self.b_vecs[k - 1]

    def affine_at(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self.a_mats[k - 1], self.b_vecs[k - 1]


def make_perturbed(
    exact: ExactScore,
    eps0: float,
    policy: str = "uniform",
    random_directions: bool = False,
    seed: int = 0,
) -> PerturbedScore:
    """Perturbed oracle whose weighted average score error equals eps0^2.

    uniform: ||c_k||^2 = eps0^2 for every k (the G_k/G_T weights sum to 1).
    sigma_scaled: ||c_k||^2 proportional to 1/sigma_{t_k}^2, normalized so the
    weighted average is eps0^2.
    """
    if eps0 < 0:
        raise InvalidParameterError("eps0 must be nonnegative")
    grid, schedule = exact.grid, exact.schedule
    n, d = grid.n_steps, exact.dim
    gk = grid.step_g(schedule)
    g_total = float(np.sum(gk))
    if policy == "uniform":
        norms_sq = np.full(n, eps0 ** 2)
    elif policy == "sigma_scaled":
        sig_sq = np.array([schedule.sigma_sq(t) for t in grid.points[1:]])
        lam = eps0 ** 2 * g_total / float(np.sum(gk / sig_sq))
        norms_sq = lam / sig_sq
    else:
        raise InvalidParameterError(f"unknown budget policy {policy!r}")
    if random_directions:
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((n, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    else:
        dirs = np.zeros((n, d))
        dirs[:, 0] = 1.0
    return PerturbedScore(exact, np.sqrt(norms_sq)[:, None] * dirs)


def fit_dsm_affine(
    dist: GaussianMixture,
    grid: DiscretizationGrid,
    schedule: VarianceSchedule,
    n: int,
    seed: int,
    ridge: float = 1e-10,
) -> DSMAffineScore:
    """Fit per-gridpoint affine scores by denoising least squares.

    For each grid point draws n pairs (x0, x_t) from the forward conditional
    and regresses the target (alpha x0 - x_t)/sigma^2 on [x_t, 1] via ridge
    (1e-10) normal equations.
    """
    d = dist.dim
    if n < d + 2:
        raise FitFailureError(f"need n >= d + 2 = {d + 2} samples, got {n}")
    rng = np.random.default_rng(seed)
    n_steps = grid.n_steps
    a_mats = np.empty((n_steps, d, d))
    b_vecs = np.empty((n_steps, d))
    for k in range(1, n_steps + 1):
        t = float(grid.points[k])
        sig_sq = schedule.sigma_sq(t)
        if sig_sq <= 0:
            raise FitFailureError(f"sigma_t^2 = 0 at grid point t={t}")
        a = schedule.alpha_coef(0.0, t)
        x0 = dist.sample(n, rng)
        z = rng.standard_normal((n, d))
        xt = a * x0 + np.sqrt(sig_sq) * z
        target = (a * x0 - xt) / sig_sq
        phi = np.hstack([xt, np.ones((n, 1))])
        gram = phi.T @ phi / n + ridge * np.eye(d + 1)
        try:
            w = np.linalg.solve(gram, phi.T @ target / n)
        except np.linalg.LinAlgError as exc:
            raise FitFailureError(f"normal equations singular at t={t}") from exc
        if not np.all(np.isfinite(w)):
            raise FitFailureError(f"non-finite fit at t={t}")
        a_mats[k - 1] = w[:d].T
        b_vecs[k - 1] = w[d]
    return DSMAffineScore(grid, a_mats, b_vecs, n)


def weighted_score_error(
    model,
    exact: ExactScore,
    n_mc: int = 10_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo estimate of the weighted average score error (eps0^2).

    Averages E_{p_{t_k}} ||exact - model||^2 with weights G_k/G_T over the
    grid; returns (estimate, standard error).
    """
    grid, schedule = exact.grid, exact.schedule
    gk = grid.step_g(schedule)
    weights = gk / np.sum(gk)
    total = 0.0
    var_total = 0.0
    for k in range(1, grid.n_steps + 1):
        t = float(grid.points[k])
        x = sample_forward(exact.dist, schedule, t, n_mc, seed + k)
        diff = exact.score_at(x, k) - model.score_at(x, k)
        sq = np.sum(diff ** 2, axis=1)
        total += weights[k - 1] * float(np.mean(sq))
        var_total += weights[k - 1] ** 2 * float(np.var(sq, ddof=1)) / n_mc
    return total, float(np.sqrt(var_total))


def epsilon_budget(
    grid: DiscretizationGrid, schedule: VarianceSchedule, eps0: float
) -> float:
    """Allowed raw denoising error: eps^2 = eps0^2 G_T (sum G_k/sigma_{t_k}^2)^-1."""
    gk = grid.step_g(schedule)
    sig_sq = np.array([schedule.sigma_sq(t) for t in grid.points[1:]])
    if np.any(sig_sq <= 0):
        raise InvalidParameterError("epsilon_budget needs sigma_{t_k} > 0 at all grid points")
    return eps0 ** 2 * float(np.sum(gk)) / float(np.sum(gk / sig_sq))
