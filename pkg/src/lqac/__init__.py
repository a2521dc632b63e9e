"""Linear-quadratic adaptive control: stepwise noisy certainty-equivalent
control with exact asymptotic characterizations and observable regions."""

from .asymptotics import (
    AsymptoticNormalizer,
    build_normalizer,
    estimation_error_whitened,
    fast_direction_error,
    gram_normalization_error,
    observable_regret,
    parametric_regret,
    tradeoff_product,
)
from .controller import (
    AlgoConfig,
    EstimatorState,
    Logarithmic,
    Stepwise,
    compute_gain,
    exploration_noise,
    init,
    rls_update,
    run_adaptive,
    run_thompson,
    warmup_input,
)
from .dynamics import (
    CheckpointSnapshot,
    RunRecord,
    TrajectoryStep,
    average_regret,
    optimal_average_cost,
    stage_cost,
    step_system,
)
from .inference import (
    QuadraticRegion,
    RegionKind,
    RegionOutcome,
    ab_confidence_region,
    ab_region_statistic,
    chi2_cdf,
    chi2_quantile,
    estimate_noise_variance,
    k_region_statistic,
    mean_prediction_statistic,
    parametric_prediction_variance,
    prediction_region_statistic,
)
from .lqr import (
    DareSolution,
    GainJacobian,
    SystemParams,
    gain_jacobian,
    is_stabilizable,
    optimal_gain,
    solve_dare,
    solve_discrete_lyapunov,
    spectral_radius,
)

__all__ = [
    "AlgoConfig",
    "AsymptoticNormalizer",
    "CheckpointSnapshot",
    "DareSolution",
    "EstimatorState",
    "GainJacobian",
    "Logarithmic",
    "QuadraticRegion",
    "RegionKind",
    "RegionOutcome",
    "RunRecord",
    "Stepwise",
    "SystemParams",
    "TrajectoryStep",
    "ab_confidence_region",
    "ab_region_statistic",
    "average_regret",
    "build_normalizer",
    "chi2_cdf",
    "chi2_quantile",
    "compute_gain",
    "estimate_noise_variance",
    "estimation_error_whitened",
    "exploration_noise",
    "fast_direction_error",
    "gain_jacobian",
    "gram_normalization_error",
    "init",
    "is_stabilizable",
    "k_region_statistic",
    "mean_prediction_statistic",
    "observable_regret",
    "optimal_average_cost",
    "optimal_gain",
    "parametric_prediction_variance",
    "parametric_regret",
    "prediction_region_statistic",
    "rls_update",
    "run_adaptive",
    "run_thompson",
    "solve_dare",
    "solve_discrete_lyapunov",
    "spectral_radius",
    "stage_cost",
    "step_system",
    "tradeoff_product",
    "warmup_input",
]

__version__ = "0.1.0"
