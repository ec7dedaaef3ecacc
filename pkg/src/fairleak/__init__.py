"""Fairness-aware leakage detection for water distribution networks."""

from importlib.resources import files
from pathlib import Path

from .detector import SmoothingConfig, ThresholdVector, classify_exact, classify_smooth
from .fairness import (
    FairnessReport,
    disparate_impact,
    empirical_covariance,
    equal_opportunity,
    evaluate_fairness,
)
from .hydrosim import (
    PressureDataset,
    ScenarioSpec,
    SimulationConfig,
    simulate_scenario,
    solve_steady_state,
)
from .network import Network, SensorSet, assign_groups, parse_inp, parse_inp_file
from .optimize import MethodSpec, TrainedModel, train
from .sensors import PreprocessConfig, ResidualDataset, compute_residuals, fit_virtual_sensors

__version__ = "0.1.0"


def bundled_data(name: str) -> Path:
    """Path of a bundled data file, e.g. ``hanoi.inp`` or ``hanoi.cfg``."""
    return Path(str(files("fairleak").joinpath("data", name)))


__all__ = [
    "FairnessReport",
    "MethodSpec",
    "Network",
    "PressureDataset",
    "PreprocessConfig",
    "ResidualDataset",
    "ScenarioSpec",
    "SensorSet",
    "SimulationConfig",
    "SmoothingConfig",
    "ThresholdVector",
    "TrainedModel",
    "assign_groups",
    "bundled_data",
    "classify_exact",
    "classify_smooth",
    "compute_residuals",
    "disparate_impact",
    "empirical_covariance",
    "equal_opportunity",
    "evaluate_fairness",
    "fit_virtual_sensors",
    "parse_inp",
    "parse_inp_file",
    "simulate_scenario",
    "solve_steady_state",
    "train",
]
