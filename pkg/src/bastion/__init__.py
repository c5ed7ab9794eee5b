"""Safe adaptive optimal control with barrier states.

A plant x_dot = Y(x) theta + f(x) + g(x) u with unknown theta is driven by an
actor-critic approximate dynamic programming controller that learns on the
plant state augmented with a barrier state.  The parameters are estimated
online with integral concurrent learning.
"""
from .config import ScenarioConfig, load_preset, parse_config, resolve
from .errors import (BarrierDomainError, BastionError, ConfigError, DegenerateGainError, DimensionError,
                     InsufficientDataError, IntegrationBlowupError, UnsafeStateError)
from .model import augment, case_study_plant, disk_constraint, eval_beta, eval_phi, is_safe
from .sim import ClosedLoop, TrajectoryLog, compute_metrics, run_lqr_oracle, run_scenario

__version__ = "0.1.0"

__all__ = [
    "BarrierDomainError", "BastionError", "ClosedLoop", "ConfigError", "DegenerateGainError", "DimensionError",
    "InsufficientDataError", "IntegrationBlowupError", "ScenarioConfig", "TrajectoryLog", "UnsafeStateError",
    "augment", "case_study_plant", "compute_metrics", "disk_constraint", "eval_beta", "eval_phi", "is_safe",
    "load_preset", "parse_config", "resolve", "run_lqr_oracle", "run_scenario",
]
