"""Error metrics and theoretical upper bounds.

Closed-form KL and W2 between Gaussian laws handle the affine pathway where
the sampler output law is known exactly; sliced W2 and energy distance cover
mixture targets where no output density is available.  ``theoretical_bound``
evaluates the predicted right-hand sides with every implicit constant set to
1, so predictions are compared by shape (slopes, ratios, orderings), never by
absolute level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError, InvalidInputError
from .samplers import GaussianLaw


@dataclass(frozen=True)
class ErrorReport:
    """One measured (or predicted) error value with provenance metadata."""

    metric: str
    value: float
    stderr: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.value < 0 and np.isfinite(self.value):
            raise InvalidInputError("error values must be nonnegative")
        if self.stderr < 0:
            raise InvalidInputError("stderr must be nonnegative")


def kl_gaussian(p: GaussianLaw, q: GaussianLaw) -> float:
    """KL(p || q) between Gaussian laws, closed form."""
    d = p.mean.size
    sign_q, logdet_q = np.linalg.slogdet(q.cov)
    sign_p, logdet_p = np.linalg.slogdet(p.cov)
    if sign_q <= 0 or sign_p <= 0:
        raise InvalidInputError("KL needs positive definite covariances")
    q_inv = np.linalg.inv(q.cov)
    dm = q.mean - p.mean
    return 0.5 * (
        np.trace(q_inv @ p.cov) - d + float(dm @ q_inv @ dm) + logdet_q - logdet_p
    )


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    # Symmetric square root with eigenvalue clamping at 0.
    vals, vecs = np.linalg.eigh(mat)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def w2_gaussian(p: GaussianLaw, q: GaussianLaw) -> float:
    """Bures-Wasserstein distance W2 between Gaussian laws."""
    root_q = _psd_sqrt(q.cov)
    cross = _psd_sqrt(root_q @ p.cov @ root_q)
    sq = float(np.sum((p.mean - q.mean) ** 2)) + float(
        np.trace(p.cov) + np.trace(q.cov) - 2.0 * np.trace(cross)
    )
    return float(np.sqrt(max(sq, 0.0)))


def sliced_w2(
    samples_a: np.ndarray,
    samples_b: np.ndarray,
    n_projections: int = 128,
    seed: int = 0,
) -> tuple[float, float]:
    """Sliced W2 between two point clouds: sqrt of the mean projected W2^2.

    Each random unit direction gives an exact 1-d W2 via the sorted quantile
    coupling; the standard error is propagated from the projection average.
    """
    a = np.atleast_2d(np.asarray(samples_a, dtype=float))
    b = np.atleast_2d(np.asarray(samples_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise InvalidInputError("empty sample set")
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError("dimension mismatch")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_projections, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    if pa.shape[0] != pb.shape[0]:
        # Match quantiles on the smaller cloud's levels.
        n = min(pa.shape[0], pb.shape[0])
        levels = (np.arange(n) + 0.5) / n
        pa = np.quantile(pa, levels, axis=0)
        pb = np.quantile(pb, levels, axis=0)
    w2_sq = np.mean((pa - pb) ** 2, axis=0)  # per projection
    mean_sq = float(np.mean(w2_sq))
    se_sq = float(np.std(w2_sq, ddof=1) / np.sqrt(n_projections))
    value = float(np.sqrt(mean_sq))
    stderr = se_sq / (2.0 * value) if value > 0 else float(np.sqrt(se_sq))
    return value, stderr


def energy_distance(
    samples_a: np.ndarray, samples_b: np.ndarray, seed: int = 0, max_pairs: int = 200_000
) -> float:
    """Empirical energy distance between two point clouds (subsampled pairs)."""
    rng = np.random.default_rng(seed)

    def mean_pair_dist(x, y):
        if x.shape[0] * y.shape[0] <= max_pairs:
            return float(cdist(x, y).mean())
        i = rng.integers(0, x.shape[0], max_pairs)
        j = rng.integers(0, y.shape[0], max_pairs)
        return float(np.mean(np.linalg.norm(x[i] - y[j], axis=1)))

    a = np.atleast_2d(samples_a)
    b = np.atleast_2d(samples_b)
    return max(
        2.0 * mean_pair_dist(a, b) - mean_pair_dist(a, a) - mean_pair_dist(b, b), 0.0
    )


def subexp_norm_proxy(samples: np.ndarray, n_levels: int = 1) -> float:
    """Quantile-based proxy for the sub-exponential norm of a scalar sample.

    For a sub-exponential X the tail satisfies log P(X > s) ~ -s / ||X||, so
    the quantile at level 1 - e^{-j} is approximately ||X|| * j.  The proxy
    fits q_j = b * j through the origin over j = 1..n_levels; the default
    single level reads off the (1 - e^{-1})-quantile directly.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 10 ** (n_levels - 1) or x.size < 10:
        raise InvalidInputError("too few samples for the requested tail depth")
    js = np.arange(1, n_levels + 1, dtype=float)
    qs = np.quantile(x, 1.0 - np.exp(-js))
    return float(np.sum(js * qs) / np.sum(js ** 2))


_BOUND_PARAMS = {
    "smooth_ei": ("m2", "d", "g_total", "eps0_sq", "lip", "pi2"),
    "smooth_em": ("m2", "d", "g_total", "eps0_sq", "lip", "pi2", "pi3"),
    "general_ei": ("m2", "d", "g_total", "eps0_sq", "pi"),
    "general_em": ("m2", "d", "g_total", "eps0_sq", "pi", "pi3"),
    "smooth_nostop": ("m2", "d", "g_total", "eps0_sq", "lip", "n"),
}


def theoretical_bound(setting: str, params: dict) -> float:
    """Predicted KL upper bound for a setting, all implicit constants = 1.

    Settings: smooth_ei/smooth_em (Lipschitz trajectory), general_ei/
    general_em (early stopping, Pi term), smooth_nostop (smooth data,
    step-size floor at 1/L).  The EM variants add the extra M2 Pi3 term.
    """
    if setting not in _BOUND_PARAMS:
        raise ConfigError(f"unknown bound setting {setting!r}")
    missing = [k for k in _BOUND_PARAMS[setting] if k not in params]
    if missing:
        raise ConfigError(f"bound {setting!r} missing parameters {missing}")
    p = params
    base = (p["m2"] + p["d"]) * np.exp(-p["g_total"]) + p["g_total"] * p["eps0_sq"]
    if setting in ("smooth_ei", "smooth_em"):
        value = base + p["d"] * p["lip"] ** 2 * p["pi2"]
    elif setting in ("general_ei", "general_em"):
        value = base + p["d"] ** 2 * p["pi"]
    else:
        value = base + p["d"] ** 2 * (np.log(p["lip"]) + p["g_total"]) ** 2 / p["n"]
    if setting.endswith("_em"):
        value += p["m2"] * p["pi3"]
    return float(value)


def rate_fit(ns, errors) -> tuple[float, float]:
    """OLS slope (with stderr) of log error against log N."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ns.size < 3:
        raise InvalidInputError("rate fit needs at least 3 points")
    if np.any(errors <= 0) or np.any(ns <= 0):
        raise InvalidInputError("rate fit needs positive values")
    x = np.log(ns)
    y = np.log(errors)
    x_c = x - x.mean()
    slope = float(np.sum(x_c * y) / np.sum(x_c ** 2))
    resid = y - (y.mean() + slope * x_c)
    dof = max(ns.size - 2, 1)
    stderr = float(np.sqrt(np.sum(resid ** 2) / dof / np.sum(x_c ** 2)))
    return slope, stderr
