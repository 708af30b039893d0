"""CRLB-driven formation design and control for cooperative target sensing.

The package splits into a measurement/information layer (:mod:`sensing`),
the closed-form optimal geometry (:mod:`formation`), the distributed control
stack (:mod:`control`), the simulation environment (:mod:`world`),
comparison formations (:mod:`benchmarks`), and config/CLI plumbing
(:mod:`config`, :mod:`cli`).
"""

from .benchmarks import BenchmarkSpec, benchmark_positions, formation_crlb, sweep_rows
from .config import RunConfig, dbm_to_watts, load_config
from .control import (
    CommGraph,
    ControlGains,
    SwarmState,
    check_stability,
    consensus_velocity_step,
    control_input,
    displacement_control,
    local_cost,
    repulsion,
    scale_factor,
)
from .errors import ConfigError, InsufficientAgentsError, SingularGeometryError
from .formation import (
    DisplacementSet,
    FormationGeometry,
    build_formation,
    displacement_set,
    optimal_azimuths,
    optimal_elevation,
    theoretical_lower_bound,
)
from .sensing import (
    SPEED_OF_LIGHT,
    AgentPose,
    Fim2,
    SensingParams,
    TargetEstimate,
    crlb_trace,
    delay_to_range,
    elevation_weight,
    jacobian,
    noise_variance,
    range_fim_element,
    slant_range,
    target_fim,
)
from .world import (
    EpisodeTrace,
    Guidance,
    RectObstacle,
    World,
    StepRecord,
    crlb_of_positions,
    displacement_error,
    min_pairwise_distance,
    nearest_point_on_obstacle,
    run_episode,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "AgentPose",
    "BenchmarkSpec",
    "CommGraph",
    "ConfigError",
    "ControlGains",
    "DisplacementSet",
    "EpisodeTrace",
    "Fim2",
    "FormationGeometry",
    "Guidance",
    "InsufficientAgentsError",
    "RectObstacle",
    "RunConfig",
    "SPEED_OF_LIGHT",
    "SensingParams",
    "SingularGeometryError",
    "StepRecord",
    "SwarmState",
    "TargetEstimate",
    "World",
    "benchmark_positions",
    "build_formation",
    "check_stability",
    "consensus_velocity_step",
    "control_input",
    "crlb_of_positions",
    "crlb_trace",
    "dbm_to_watts",
    "delay_to_range",
    "displacement_control",
    "displacement_error",
    "displacement_set",
    "elevation_weight",
    "formation_crlb",
    "jacobian",
    "load_config",
    "local_cost",
    "min_pairwise_distance",
    "nearest_point_on_obstacle",
    "noise_variance",
    "optimal_azimuths",
    "optimal_elevation",
    "range_fim_element",
    "repulsion",
    "run_episode",
    "scale_factor",
    "slant_range",
    "step",
    "sweep_rows",
    "target_fim",
    "theoretical_lower_bound",
]
