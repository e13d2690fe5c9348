"""Bimodal hydrostatic actuator: model, controller, simulator and design analysis."""

from .config import load_config
from .params import ActuatorParams, ConfigError, derived_constants, validate
from .scenarios import load_scenario
from .simulator import SimulationInstability, energy_audit, run_scenario

__all__ = [
    "ActuatorParams",
    "ConfigError",
    "SimulationInstability",
    "derived_constants",
    "energy_audit",
    "load_config",
    "load_scenario",
    "run_scenario",
    "validate",
]

__version__ = "0.1.0"
