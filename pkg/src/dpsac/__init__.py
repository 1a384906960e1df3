"""Cluster-partitioned burst-buffer I/O scheduling for periodic HPC applications."""
from .engine import MetricsReport, RunConfig, SimulationError, Simulator, compute_metrics, run
from .model import (ApplicationSpec, ScenarioError, ScenarioSpec, SystemConfig, apex_catalog, build_scenario,
                    load_scenario)
from .scheduler import StrategyConfig, parse_strategy

__version__ = "0.1.0"

__all__ = ["ApplicationSpec", "MetricsReport", "RunConfig", "ScenarioError", "ScenarioSpec", "SimulationError",
           "Simulator", "StrategyConfig", "SystemConfig", "apex_catalog", "build_scenario", "compute_metrics",
           "load_scenario", "parse_strategy", "run"]
