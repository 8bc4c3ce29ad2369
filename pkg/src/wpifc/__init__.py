"""Joint waveform, power and time-split design for wireless-powered interference channels."""
from .channel import ChannelSet, apply_csi_error, draw_channels, generate_channels
from .model import (
    ConfigError,
    CsiModel,
    DesignVariables,
    GeometryConfig,
    NetworkConfig,
    NonlinearEhParams,
    RunTrace,
    default_config,
    load_config,
)
from .optimizer import (
    OuterOptions,
    TauInfeasible,
    optimal_tau,
    run_baseline_power_only,
    run_maxmin,
    run_sum_throughput,
)
from .oracle import EmptyFeasibleSet, grid_oracle
from .solver import SolverOptions

__all__ = [
    "ChannelSet", "ConfigError", "EmptyFeasibleSet", "CsiModel", "DesignVariables", "GeometryConfig", "NetworkConfig",
    "NonlinearEhParams", "OuterOptions", "RunTrace", "SolverOptions", "TauInfeasible", "apply_csi_error",
    "default_config", "draw_channels", "generate_channels", "grid_oracle", "load_config", "optimal_tau",
    "run_baseline_power_only", "run_maxmin", "run_sum_throughput",
]
