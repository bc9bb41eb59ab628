"""Delay-tolerant distributed Kalman filtering with finite-time consensus."""

from .baseline import BaselineKind, centralized_kf, drop_late_dkf
from .bounds import BoundParams, cov_lower_bound, contraction_gamma, max_delay_bound, resolve_bound_params
from .consensus import InfoPair, run_rounds
from .filter import FilterBank, LocalEstimate
from .fusion import fuse, matrix_weights, vector_weights
from .graph import Topology, classify, consensus_rounds
from .model import SensorModel, SystemModel, constant_acceleration, validate_model
from .network import DelayProfile
from .scenario import Scenario, load_scenario
from .simulate import MetricsRecord, emit_metrics, run_monte_carlo, steady_state

__version__ = "0.1.0"

__all__ = [
    "BaselineKind", "BoundParams", "DelayProfile", "FilterBank", "InfoPair", "LocalEstimate", "MetricsRecord",
    "Scenario", "SensorModel", "SystemModel", "Topology", "centralized_kf", "classify", "consensus_rounds",
    "constant_acceleration", "cov_lower_bound", "drop_late_dkf", "emit_metrics", "fuse", "contraction_gamma",
    "load_scenario", "matrix_weights", "max_delay_bound", "resolve_bound_params", "run_monte_carlo", "run_rounds",
    "steady_state", "validate_model", "vector_weights",
]
