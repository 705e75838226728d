"""Models module."""
from .control import ControlProblem, ControlSolution  # type: ignore
from .ensemble import Ensemble  # type: ignore
from .experiment import ConfigError, ExperimentConfig, ExperimentResult, parse_config  # type: ignore
from .forcing import (  # type: ignore
    ForcingSolution,
    InversionContext,
    InversionDiagnostics,
    InversionScheme,
    MeanModel,
    Order,
    StrategyChoice,
)
from .kernels import CovResponseKernel, KernelEstimate, KernelProvenance, MeanResponseKernel  # type: ignore
from .moments import EquilibriumStats, MomentSeries, MomentSnapshot  # type: ignore
from .quadratic_system import QuadraticSystem  # type: ignore
from .triad import StructureError, TriadParams  # type: ignore
from .validation import ValidationCheck, ValidationReport  # type: ignore

__all__ = [
    "ConfigError",
    "ControlProblem",
    "ControlSolution",
    "CovResponseKernel",
    "Ensemble",
    "EquilibriumStats",
    "ExperimentConfig",
    "ExperimentResult",
    "ForcingSolution",
    "InversionContext",
    "InversionDiagnostics",
    "InversionScheme",
    "KernelEstimate",
    "KernelProvenance",
    "MeanModel",
    "MeanResponseKernel",
    "MomentSeries",
    "MomentSnapshot",
    "Order",
    "QuadraticSystem",
    "StrategyChoice",
    "StructureError",
    "TriadParams",
    "ValidationCheck",
    "ValidationReport",
    "parse_config",
]
