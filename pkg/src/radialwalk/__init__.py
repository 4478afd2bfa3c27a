"""Seeded Monte Carlo toolkit for zero-drift walks with direction-dependent
increment covariance: exact compensator tracking, squared-Bessel reference
laws, and goodness-of-fit diagnostics for the diffusive radial limit."""

__version__ = "0.1.0"

from .bessel import (
    BesqLaw,
    besq_exact_step,
    besq_marginal_cdf,
    euler_bessel,
    regularized_lower_gamma,
)
from .covariance import (
    GAUSSIAN,
    RADEMACHER,
    CovarianceField,
    ExactMoments,
    FieldParams,
    FieldValidation,
    Perturbation,
    WalkModel,
    canonical_field,
    canonical_sigma,
    exact_moments,
    make_walk_model,
    moment_profile,
    orthonormal_frame,
    sample_increment,
    sample_increments,
    sphere_directions,
    validate_field,
)
from .seeding import make_rng, mix64, substream_seed, substream_seeds
from .stats import (
    INCONCLUSIVE,
    RECURRENT,
    TRANSIENT,
    KSReport,
    MarginalFitResult,
    MomentRatioCheck,
    OccupationCheck,
    PhaseVerdict,
    classify_phase,
    kolmogorov_tail,
    ks_critical_value,
    ks_statistic,
    ks_threshold,
    marginal_fit,
    moment_bound_check,
    occupation_fraction,
)
from .walk import (
    CompensatorTrack,
    ConvergenceResiduals,
    JumpDiagnostics,
    ScaledPath,
    SimulationOverflow,
    Trajectory,
    compensators,
    convergence_residuals,
    jump_diagnostics,
    run_ensemble,
    scale,
    simulate,
    simulate_batch,
    write_track_csv,
    write_trajectory_csv,
)

__all__ = [
    "__version__",
    "BesqLaw",
    "besq_exact_step",
    "besq_marginal_cdf",
    "euler_bessel",
    "regularized_lower_gamma",
    "GAUSSIAN",
    "RADEMACHER",
    "CovarianceField",
    "ExactMoments",
    "FieldParams",
    "FieldValidation",
    "Perturbation",
    "WalkModel",
    "canonical_field",
    "canonical_sigma",
    "exact_moments",
    "make_walk_model",
    "moment_profile",
    "orthonormal_frame",
    "sample_increment",
    "sample_increments",
    "sphere_directions",
    "validate_field",
    "make_rng",
    "mix64",
    "substream_seed",
    "substream_seeds",
    "INCONCLUSIVE",
    "RECURRENT",
    "TRANSIENT",
    "KSReport",
    "MarginalFitResult",
    "MomentRatioCheck",
    "OccupationCheck",
    "PhaseVerdict",
    "classify_phase",
    "kolmogorov_tail",
    "ks_critical_value",
    "ks_statistic",
    "ks_threshold",
    "marginal_fit",
    "moment_bound_check",
    "occupation_fraction",
    "CompensatorTrack",
    "ConvergenceResiduals",
    "JumpDiagnostics",
    "ScaledPath",
    "SimulationOverflow",
    "Trajectory",
    "compensators",
    "convergence_residuals",
    "jump_diagnostics",
    "run_ensemble",
    "scale",
    "simulate",
    "simulate_batch",
    "write_track_csv",
    "write_trajectory_csv",
]
