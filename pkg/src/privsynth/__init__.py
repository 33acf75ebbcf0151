"""Synthesis of privacy mechanisms for networked LQR loops."""

from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    InfeasibleError,
    NotPositiveDefiniteError,
    NumericalError,
    PrivsynthError,
    StabilityError,
)
from .model import AdversaryFilter, PlantModel, PrivacyMechanism, load_case_study

__version__ = "0.1.0"

__all__ = [
    "AdversaryFilter",
    "ConfigError",
    "ConvergenceError",
    "DimensionError",
    "InfeasibleError",
    "NotPositiveDefiniteError",
    "NumericalError",
    "PlantModel",
    "PrivacyMechanism",
    "PrivsynthError",
    "StabilityError",
    "load_case_study",
]
