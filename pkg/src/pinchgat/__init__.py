"""Pinching-antenna downlink toolkit.

Simulates a waveguide-fed pinching-antenna system, trains attention-based
models that jointly place antennas and allocate power for energy
efficiency, and benchmarks them against a fixed-antenna convex-optimization
baseline.
"""

from .system import (
    SystemConfig,
    UserLayout,
    AntennaPlacement,
    PowerAllocation,
    Solution,
    ConfigError,
    default_config,
    dbm_to_watts,
    derived_constants,
    in_waveguide_phase,
    channel_coefficient,
    user_rate,
    energy_efficiency,
    check_feasible,
)
from .projection import scale_to_budget, positions_from_deltas
from .graph import BipartiteGraph, build_graph, update_edge_features
from .bgat import (
    BgatArchitecture,
    MlpArchitecture,
    GatPoolArchitecture,
    Model,
    create_model,
    bgat_forward,
    mlp_baseline_forward,
    gatpool_baseline_forward,
    unsupervised_loss,
)
from .sca import sca_solve, grid_oracle, fixed_placement, fixed_channel
from .data import Dataset, gen_dataset
from .training import TrainConfig, desk_train_config, train
from .evaluation import EvalReport, evaluate, compare_table, batched_ee

__version__ = "0.1.0"

__all__ = [
    "SystemConfig", "UserLayout", "AntennaPlacement", "PowerAllocation",
    "Solution", "ConfigError", "default_config", "dbm_to_watts",
    "derived_constants", "in_waveguide_phase", "channel_coefficient",
    "user_rate", "energy_efficiency", "check_feasible", "scale_to_budget",
    "positions_from_deltas", "BipartiteGraph", "build_graph",
    "update_edge_features", "BgatArchitecture", "MlpArchitecture",
    "GatPoolArchitecture", "Model", "create_model", "bgat_forward",
    "mlp_baseline_forward", "gatpool_baseline_forward", "unsupervised_loss",
    "sca_solve", "grid_oracle", "fixed_placement", "fixed_channel",
    "Dataset", "gen_dataset", "TrainConfig", "desk_train_config", "train",
    "EvalReport", "evaluate", "compare_table", "batched_ee",
]
