"""Energy-efficiency Pareto boundary tools for coordinated MISO downlinks."""

from .model import (
    Beamformer,
    ConfigurationError,
    Covariance,
    DimensionMismatchError,
    EEPoint,
    Scenario,
    achievable_rate,
    generate_channels,
    is_pareto_dominated,
    link_ee,
    total_power,
)
from .solver import (
    ConvergenceError,
    DualPoint,
    ITVector,
    LinkIT,
    LinkSolution,
    SolverError,
    dinkelbach_bisection,
    effective_noise,
    ellipsoid_solve,
    parametric_primal,
)
from .pareto import (
    BoundaryTrace,
    DirectionMatrix,
    DistributedConfig,
    DistributedRun,
    achieved_interference,
    build_direction_matrix,
    default_it_grid,
    direction_vector,
    pc_zero_point,
    run_distributed,
    sensitivity_cross,
    sensitivity_own,
    sweep_boundary,
    zf_ee_init,
)
from .oracle import (
    OracleCloud,
    brute_force_cloud,
    dual_grid_min,
    finite_diff_ee,
    projected_gradient_inner,
)
from .config import RunConfig, dbm_to_watts, load_config

__version__ = "0.1.0"

__all__ = [
    "Beamformer",
    "BoundaryTrace",
    "ConfigurationError",
    "ConvergenceError",
    "Covariance",
    "DimensionMismatchError",
    "DirectionMatrix",
    "DistributedConfig",
    "DistributedRun",
    "DualPoint",
    "EEPoint",
    "ITVector",
    "LinkIT",
    "LinkSolution",
    "OracleCloud",
    "RunConfig",
    "Scenario",
    "SolverError",
    "achievable_rate",
    "achieved_interference",
    "brute_force_cloud",
    "build_direction_matrix",
    "dbm_to_watts",
    "default_it_grid",
    "dinkelbach_bisection",
    "direction_vector",
    "dual_grid_min",
    "effective_noise",
    "ellipsoid_solve",
    "finite_diff_ee",
    "generate_channels",
    "is_pareto_dominated",
    "link_ee",
    "load_config",
    "parametric_primal",
    "pc_zero_point",
    "projected_gradient_inner",
    "run_distributed",
    "sensitivity_cross",
    "sensitivity_own",
    "sweep_boundary",
    "total_power",
    "zf_ee_init",
    "__version__",
]
