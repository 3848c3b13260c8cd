"""Statistics and optimal averaging for spatial averages with missing data."""

from .data_model import (
    AvailabilityModel,
    NoiseModel,
    ObservationPanel,
    TruthSeries,
    WeightVector,
    evaluate_average,
    validate_panel,
)
from .delta_stats import (
    RSMoments,
    StatReport,
    delta_bias,
    delta_variance,
    full_report,
    mse_and_se,
    rs_moments,
    validity_diagnostic,
    variance_from_rs,
)
from .mc_sim import SimConfig, SimResult, enumerate_exact, enumerate_rs_moments, simulate
from .moments import MomentSet, build_variance_matrix, estimate_moments
from .oa_solver import (
    QpProblem,
    QpSolution,
    bias_directional_derivative,
    minimize_bias,
    minimize_missing_bias_closed_form,
    minimize_mse,
    minimize_variance,
    solve_qp,
)
from .synth import generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AvailabilityModel",
    "MomentSet",
    "NoiseModel",
    "ObservationPanel",
    "QpProblem",
    "QpSolution",
    "RSMoments",
    "SimConfig",
    "SimResult",
    "StatReport",
    "TruthSeries",
    "WeightVector",
    "bias_directional_derivative",
    "build_variance_matrix",
    "delta_bias",
    "delta_variance",
    "enumerate_exact",
    "enumerate_rs_moments",
    "estimate_moments",
    "evaluate_average",
    "full_report",
    "generate_synthetic",
    "minimize_bias",
    "minimize_missing_bias_closed_form",
    "minimize_mse",
    "minimize_variance",
    "mse_and_se",
    "rs_moments",
    "simulate",
    "solve_qp",
    "validate_panel",
    "validity_diagnostic",
    "variance_from_rs",
    "__version__",
]
