"""Discrete-event simulator for hybrid AES + ECC mutual authentication of vehicle RFID tags."""
from .config import parse_config
from .experiments import SweepAxis, SweepSpec, run_sweep
from .metrics import MetricsReport, emit_csv, summarize
from .simcore import ConfigError, Scenario, Simulation, run

__all__ = [
    "ConfigError", "MetricsReport", "Scenario", "Simulation", "SweepAxis", "SweepSpec",
    "emit_csv", "parse_config", "run", "run_sweep", "summarize",
]
__version__ = "0.1.0"
