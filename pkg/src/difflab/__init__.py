"""Numerical laboratory for reverse-SDE diffusion sampling."""

from .distributions import (
    ForwardMarginal,
    GaussianMixture,
    forward_marginal,
    gmm_preset,
    kl_to_standard_gaussian,
    point_mass,
    sample_forward,
    second_moment,
    single_gaussian,
    standard_gaussian,
    two_point,
)
from .harness import ExperimentResult, ExperimentSpec, report, run_sweep
from .metrics import (
    ErrorReport,
    energy_distance,
    kl_gaussian,
    rate_fit,
    sliced_w2,
    theoretical_bound,
    w2_gaussian,
)
from .presets import preset, preset_names
from .samplers import (
    GaussianLaw,
    SamplerConfig,
    propagate_affine_law,
    reference_chain,
    rescale_output,
    run_chain,
    step_ei,
    step_em,
)
from .schedules import (
    DiscretizationGrid,
    VarianceSchedule,
    build_exp_decreasing_grid,
    build_uniform_grid,
    check_step_condition,
    schedule_functionals,
)
from .score_models import (
    DSMAffineScore,
    ExactScore,
    PerturbedScore,
    epsilon_budget,
    fit_dsm_affine,
    make_perturbed,
    weighted_score_error,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
