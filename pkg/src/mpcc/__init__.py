"""Model predictive contouring control for obstacle avoidance at the limit of handling."""

from .config import RunConfig, config_from_dict, default_config_dict, load_config
from .errors import (
    AmbiguousProjectionError,
    ConfigError,
    FrictionViolationError,
    InfeasibleInitialStateError,
    InvalidGeometryError,
    InvalidStateError,
    MpccError,
    PathTooShortError,
    PathValidationError,
    QpInfeasibleError,
)
from .path import (
    Obstacle,
    ReferencePath,
    TrackSpec,
    contouring_lag_errors,
    load_path_csv,
    project_to_path,
    v2e_distance,
    v2o_distance_cartesian,
    v2o_distance_frenet,
)
from .problem import (
    Bounds,
    Mode,
    MpccConfig,
    MpccWeights,
    assemble,
    ideal_brake_repartition,
    stage_cost,
    step_weight,
    v2o_weight,
)
from .scenarios import (
    Metrics,
    Scenario,
    build_circular_v2o_study,
    build_double_lane_change,
    compute_metrics,
    write_study_csv,
)
from .sim import ActuatorModel, PlantConfig, PlantSim, SimLog, run_scenario
from .solver import HorizonSolution, SolverSettings, solve
from .tyre import TyreParams, derated_friction, fiala_lateral_force, slip_angles
from .vehicle import (
    LOW_SPEED_FLOOR,
    ControlRate,
    VehicleParams,
    VehicleState,
    dynamics,
    rk2_step,
    split_longitudinal_force,
    static_axle_loads,
)

__all__ = [
    "ActuatorModel",
    "AmbiguousProjectionError",
    "Bounds",
    "ConfigError",
    "ControlRate",
    "FrictionViolationError",
    "HorizonSolution",
    "InfeasibleInitialStateError",
    "InvalidGeometryError",
    "InvalidStateError",
    "LOW_SPEED_FLOOR",
    "Metrics",
    "Mode",
    "MpccConfig",
    "MpccError",
    "MpccWeights",
    "Obstacle",
    "PathTooShortError",
    "PathValidationError",
    "PlantConfig",
    "PlantSim",
    "QpInfeasibleError",
    "ReferencePath",
    "RunConfig",
    "Scenario",
    "SimLog",
    "SolverSettings",
    "TrackSpec",
    "TyreParams",
    "VehicleParams",
    "VehicleState",
    "build_circular_v2o_study",
    "build_double_lane_change",
    "compute_metrics",
    "config_from_dict",
    "contouring_lag_errors",
    "default_config_dict",
    "derated_friction",
    "dynamics",
    "fiala_lateral_force",
    "ideal_brake_repartition",
    "load_config",
    "load_path_csv",
    "project_to_path",
    "rk2_step",
    "run_scenario",
    "slip_angles",
    "solve",
    "split_longitudinal_force",
    "stage_cost",
    "static_axle_loads",
    "step_weight",
    "v2e_distance",
    "v2o_distance_cartesian",
    "v2o_distance_frenet",
    "v2o_weight",
    "write_study_csv",
]

__version__ = "0.1.0"
