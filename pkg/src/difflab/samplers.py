"""Reverse-time generative samplers.

Both schemes integrate the reverse SDE over one step with the score frozen at
the left endpoint of the reverse interval (forward time t_k):

* Euler-Maruyama also freezes the linear drift:
  y' = y + (y/2 + s) G_k + sqrt(G_k) z.
* The exponential integrator solves the linear part exactly (variation of
  constants):
  y' = e^{G_k/2} y + 2 (e^{G_k/2} - 1) s + sqrt(e^{G_k} - 1) z.

Here G_k is the clock increment of the matching forward interval; it is both
the drift integral and the noise variance because drift and diffusion carry
the same g^2 factor.  When every score is affine the chain is a Gaussian
linear system and its law can be propagated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, UnsupportedModelError
from .schedules import DiscretizationGrid, VarianceSchedule
from .score_models import ExactScore


@dataclass(frozen=True)
class GaussianLaw:
    """Mean and covariance of a Gaussian law."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        if not np.allclose(self.cov, self.cov.T, atol=1e-9):
            raise InvalidInputError("covariance must be symmetric")


@dataclass(frozen=True)
class SamplerConfig:
    """One fully specified sampling run."""

    scheme: str  # "em" or "ei"
    grid: DiscretizationGrid
    schedule: VarianceSchedule
    score_model: object
    seed: int = 0
    n_samples: int = 1

    def __post_init__(self):
        if self.scheme not in ("em", "ei"):
            raise InvalidParameterError(f"unknown scheme {self.scheme!r}")
        model_grid = getattr(self.score_model, "grid", None)
        if model_grid is not None and not np.array_equal(
            model_grid.points, self.grid.points
        ):
            raise InvalidInputError("score model grid does not match sampler grid")


def step_em(y: np.ndarray, g_step: float, s: np.ndarray, z: np.ndarray) -> np.ndarray:
    """One Euler-Maruyama reverse step."""
    out = y + (0.5 * y + s) * g_step + np.sqrt(g_step) * z
    if not np.all(np.isfinite(out)):
        raise InvalidInputError("non-finite state in EM step")
    return out

def step_ei(y: np.ndarray, g_step: float, s: np.ndarray, z: np.ndarray) -> np.ndarray:
    """One exponential-integrator reverse step (exact linear part)."""
    e_half = np.exp(0.5 * g_step)
    out = e_half * y + 2.0 * (e_half - 1.0) * s + np.sqrt(np.expm1(g_step)) * z
    if not np.all(np.isfinite(out)):
        raise InvalidInputError("non-finite state in EI step")
    return out


_STEPS = {"em": step_em, "ei": step_ei}


def run_chain(config: SamplerConfig) -> np.ndarray:
    """Run the full reverse chain from N(0, I); returns (n_samples, d) samples.

    The output approximates p_delta (forward time t_0).  Scores are queried at
    the left endpoint of each reverse interval, i.e. forward times t_N..t_1.
    """
    d = config.score_model.dim
    rng = np.random.default_rng(config.seed)
    y = rng.standard_normal((config.n_samples, d))
    step = _STEPS[config.scheme]
    gk = config.grid.step_g(config.schedule)
    for k in range(config.grid.n_steps, 0, -1):
        s = config.score_model.score_at(y, k)
        z = rng.standard_normal(y.shape)
        y = step(y, float(gk[k - 1]), s, z)
    return y


def reference_chain(config: SamplerConfig, refine: int) -> np.ndarray:
    """Same scheme on a grid refined by equal-clock splitting of every step.

    Each step is split into ``refine`` sub-steps of equal G and the exact
    score is queried at every sub-step, giving a near-continuum oracle for
    distribution-level comparisons.  Requires an exact score model.
    """
    if refine < 1:
        raise InvalidParameterError("refine factor must be >= 1")
    if not isinstance(config.score_model, ExactScore):
        raise UnsupportedModelError("reference chain needs the exact score oracle")
    sched = config.schedule
    anti = [sched.big_g(float(t)) for t in config.grid.points]
    times = [config.grid.points[0]]
    for k in range(config.grid.n_steps):
        for j in range(1, refine + 1):
            g_here = anti[k] + j * (anti[k + 1] - anti[k]) / refine
            times.append(sched.time_at_g(g_here))
        times[-1] = float(config.grid.points[k + 1])  # avoid inversion round-off
    fine = DiscretizationGrid(np.array(times))
    d = config.score_model.dim
    rng = np.random.default_rng(config.seed)
    y = rng.standard_normal((config.n_samples, d))
    step = _STEPS[config.scheme]
    gk = fine.step_g(sched)
    for k in range(fine.n_steps, 0, -1):
        s = config.score_model.at_time(y, float(fine.points[k]))
        z = rng.standard_normal(y.shape)
        y = step(y, float(gk[k - 1]), s, z)
    return y


def _affine_step_coeffs(scheme: str, g_step: float, a_mat, b_vec):
    """(F, u, v): one sampler step composed with s(x) = A x + b is
    y' = F y + u + sqrt(v) z."""
    d = b_vec.shape[0]
    eye = np.eye(d)
    if scheme == "em":
        f = eye + g_step * (0.5 * eye + a_mat)
        u = g_step * b_vec
        v = g_step
    else:
        e_half = np.exp(0.5 * g_step)
        f = e_half * eye + 2.0 * (e_half - 1.0) * a_mat
        u = 2.0 * (e_half - 1.0) * b_vec
        v = float(np.expm1(g_step))
    return f, u, v


def propagate_affine_law(config: SamplerConfig) -> GaussianLaw:
    """Exact Gaussian law of the chain output when every score is affine."""
    if not hasattr(config.score_model, "affine_at"):
        raise UnsupportedModelError("score model has no affine representation")
    d = config.score_model.dim
    mean = np.zeros(d)
    cov = np.eye(d)
    gk = config.grid.step_g(config.schedule)
    for k in range(config.grid.n_steps, 0, -1):
        a_mat, b_vec = config.score_model.affine_at(k)
        f, u, v = _affine_step_coeffs(config.scheme, float(gk[k - 1]), a_mat, b_vec)
        mean = f @ mean + u
        cov = f @ cov @ f.T + v * np.eye(d)
    return GaussianLaw(mean, cov)


def rescale_output(output, delta: float, schedule: VarianceSchedule):
    """Pushforward by x -> exp(G_delta / 2) x aligning p_delta with the data.

    Accepts a sample array or a GaussianLaw and returns the same type.
    """
    if delta < 0:
        raise InvalidParameterError("delta must be nonnegative")
    scale = np.exp(0.5 * schedule.big_g(delta))
    if isinstance(output, GaussianLaw):
        return GaussianLaw(scale * output.mean, scale ** 2 * output.cov)
    return scale * np.asarray(output)
