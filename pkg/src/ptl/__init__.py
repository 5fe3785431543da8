"""Perceptron threshold lab.

Exact solution-set simulation for the symmetric binary perceptron with
Gaussian disorder, together with every closed-form quantity it is checked
against: the critical constants, the pair probability, cycle-count
statistics, solution-count moments, and the limiting threshold law.
"""

from .errors import (
    BudgetError,
    CapacityError,
    DomainError,
    NumericalInstabilityError,
    PtlError,
    RunawayError,
    SampleSizeError,
    SamplingError,
    ValidationError,
)
from .special_fn import Constants, QuadratureConfig, constants
from .simulator import ModelParams, PlantedKind, SolutionSet, ThresholdRecord

__version__ = "0.1.0"

__all__ = [
    "BudgetError",
    "CapacityError",
    "Constants",
    "DomainError",
    "ModelParams",
    "NumericalInstabilityError",
    "PlantedKind",
    "PtlError",
    "QuadratureConfig",
    "RunawayError",
    "SampleSizeError",
    "SamplingError",
    "SolutionSet",
    "ThresholdRecord",
    "ValidationError",
    "constants",
    "__version__",
]
