"""Services module."""
from .control_service import ControlService  # type: ignore
from .dynamics_service import DynamicsService  # type: ignore
from .ensemble_service import EnsembleService  # type: ignore
from .experiment_service import ExperimentService  # type: ignore
from .inversion_service import InversionService  # type: ignore
from .mean_response import LinearResponseModel, MeanClosureModel  # type: ignore
from .monitoring_service import MonitoringService  # type: ignore
from .response_service import ResponseService  # type: ignore

__all__ = [
    "ControlService",
    "DynamicsService",
    "EnsembleService",
    "ExperimentService",
    "InversionService",
    "LinearResponseModel",
    "MeanClosureModel",
    "MonitoringService",
    "ResponseService"
]
