"""Constraint-aware fast charging of a lithium-ion cell in simulation."""

from .config import Config, default_config, load_config, parse_config
from .controller import ControllerGains, ControllerState, cccv_step, cccvest_step
from .engine import Scenario, SimResult, SimulationError, charge_time, run_charge, sensitivity_sweep
from .params import CellParameters, ConfigError
from .signals import ConstraintLimits

__version__ = "0.1.0"

__all__ = [
    "CellParameters",
    "Config",
    "ConfigError",
    "ConstraintLimits",
    "ControllerGains",
    "ControllerState",
    "Scenario",
    "SimResult",
    "SimulationError",
    "cccv_step",
    "cccvest_step",
    "charge_time",
    "default_config",
    "load_config",
    "parse_config",
    "run_charge",
    "sensitivity_sweep",
]
