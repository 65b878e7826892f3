"""Named experiment presets mirroring the acceptance experiments."""

from __future__ import annotations

from .errors import ConfigError
from .harness import ExperimentSpec

_PRESETS = {
    # 1/N KL rate on a Gaussian target via the exact affine law.
    "rate_vs_N": {
        "dist.preset": "gaussian",
        "dist.d": 4,
        "dist.scale": 4.0,
        "schedule.kind": "constant",
        "grid.kind": "exp_decreasing",
        "grid.delta": 1e-3,
        "grid.T": 8.0,
        "grid.N": [32, 64, 128, 256, 512, 1024],
        "score.kind": "exact",
        "sampler.scheme": "ei",
        "metrics": ["kl_affine"],
    },
    # Second-moment separation: EM degrades with the mean shift, EI does not.
    "em_vs_ei_m2": {
        "dist.preset": "gaussian",
        "dist.d": 2,
        "dist.mu": [0.0, 10.0, 50.0, 100.0],
        "schedule.kind": "constant",
        "grid.kind": "uniform",
        "grid.delta": 0.01,
        "grid.T": 8.0,
        "grid.N": 128,
        "score.kind": "exact",
        "sampler.scheme": ["em", "ei"],
        "metrics": ["kl_affine"],
    },
    # Forward convergence: KL(p_T || gamma) under (d + M2) exp(-G_T).
    "forward_kl_decay": {
        "dist.preset": ["gaussian", "point_mass"],
        "dist.d": [2, 8],
        "dist.mu": 3.0,
        "dist.scale": 2.0,
        "schedule.kind": "constant",
        "grid.T": [2.0, 4.0, 6.0, 8.0, 10.0],
        "grid.N": 1,
        "metrics": ["forward_kl"],
    },
    # Pi functional against its predicted shape for both schedule families.
    "schedule_pi_bounds": {
        "grid.kind": ["uniform", "exp_decreasing"],
        "schedule.kind": "power",
        "schedule.alpha": [0.25, 0.5, 1.0, 2.0],
        "grid.c": [1 / 64, 1 / 128],
        "grid.delta": [1e-2, 1e-3],
        "grid.T": [4.0, 8.0],
        "grid.N": "threshold",
        "dist.d": 1,
        "metrics": ["pi"],
    },
    # Affine DSM fit error decays like 1/n in the fit sample size.
    "dsm_recovery": {
        "dist.preset": "standard_gaussian",
        "dist.d": 2,
        "schedule.kind": "constant",
        "grid.kind": "uniform",
        "grid.delta": 0.05,
        "grid.T": 4.0,
        "grid.N": 16,
        "score.kind": "dsm_affine",
        "score.n_fit": [250, 500, 1000, 2000, 4000],
        "metrics": ["weighted_score_error"],
    },
    # Sub-exponential tail proxy of the Hessian scales like d / sigma^2.
    "hessian_tail": {
        "dist.preset": "three_component",
        "dist.d": [2, 4, 8],
        "extra.sigma_sq": [0.1, 0.2, 0.4],
        "metrics": ["hessian_subexp"],
    },
    # Low-noise Lipschitz bound holds exactly for Gaussian data.
    "lipschitz_lownoise": {
        "dist.d": 3,
        "extra.L": [2.0, 10.0],
        "metrics": ["lipschitz_ratio"],
    },
    # KL grows affinely in the score error budget eps0^2.
    "eps0_linearity": {
        "dist.preset": "gaussian",
        "dist.d": 2,
        "dist.scale": 2.0,
        "schedule.kind": "constant",
        "grid.kind": "uniform",
        "grid.delta": 1e-3,
        "grid.T": 8.0,
        "grid.N": 2048,
        "score.kind": "perturbed",
        "score.eps0": [0.0, 0.1, 0.2, 0.3],
        "sampler.scheme": "ei",
        "metrics": ["kl_affine"],
    },
}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def preset(name: str) -> ExperimentSpec:
    """Fully specified experiment spec for a named acceptance experiment."""
    try:
        cfg = dict(_PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}") from None
    return ExperimentSpec(cfg)
