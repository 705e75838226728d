"""Inversion strategies, their inputs and the resulting forcing perturbation."""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from turbulence_energy_control.models.kernels import CovResponseKernel, MeanResponseKernel
from turbulence_energy_control.models.quadratic_system import QuadraticSystem


class Order(Enum):
    """Truncation order of the control-forcing relation."""
    LOW = "low"
    HIGH = "high"


class MeanModel(Enum):
    """Provider of the mean response during inversion."""
    LINEAR_RESPONSE = "lr"
    MEAN_CLOSURE = "closure"


class InversionScheme(Enum):
    """How kappa is advanced between control-grid nodes."""
    INCREMENT = "increment"
    DERIVATIVE = "derivative"


STRATEGY_LABELS = ("low-lr", "low-closure", "high-lr", "high-closure")


@dataclass(frozen=True)
class StrategyChoice:
    """One of the four strategies, with optional per-mode order overrides (zero-based modes)."""
    order: Order
    mean_model: MeanModel
    order_overrides: dict[int, Order] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"{self.order.value}-{self.mean_model.value}"

    def order_for(self, mode: int) -> Order:
        return self.order_overrides.get(mode, self.order)

    def high_order_mask(self, dim: int) -> np.ndarray:
        return np.array([self.order_for(k) is Order.HIGH for k in range(dim)])

    @classmethod
    def from_label(cls, label: str, order_overrides: dict[int, Order] | None = None) -> "StrategyChoice":
        """Parse labels such as 'high-closure'."""
        try:
            order, model = label.split("-", 1)
            return cls(Order(order), MeanModel(model), dict(order_overrides or {}))
        except ValueError as e:
            raise ValueError(f"Unknown strategy '{label}', expected one of {', '.join(STRATEGY_LABELS)}") from e


@dataclass(frozen=True, eq=False)
class InversionContext:
    """Everything the inversion needs besides the control solution."""
    system: QuadraticSystem
    mean_eq: np.ndarray
    forcing_pert: np.ndarray
    initial_response: np.ndarray  # measured ensemble mean perturbation at t = 0
    mean_kernel: MeanResponseKernel | None = None
    cov_kernel: CovResponseKernel | None = None
    cov_eq: np.ndarray | None = None
    closure_anchor: bool = True
    scheme: InversionScheme = InversionScheme.INCREMENT

    @property
    def forcing_eq(self) -> np.ndarray:
        return self.system.forcing_eq


@dataclass
class InversionDiagnostics:
    """Diagnostics collected while inverting."""
    denominator_min: np.ndarray
    terminal_kappa_norm: float = 0.0
    max_kappa_norm: float = 0.0
    alternate_equilibrium: bool = False
    predicted_initial_response: np.ndarray | None = None
    measured_initial_response: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def _list(a: np.ndarray | None) -> list[float] | None:
            return None if a is None else [float(x) for x in a]

        return {
            "denominator_min": _list(self.denominator_min),
            "terminal_kappa_norm": float(self.terminal_kappa_norm),
            "max_kappa_norm": float(self.max_kappa_norm),
            "alternate_equilibrium": bool(self.alternate_equilibrium),
            "predicted_initial_response": _list(self.predicted_initial_response),
            "measured_initial_response": _list(self.measured_initial_response),
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True, eq=False)
class ForcingSolution:
    """kappa_k(t) and the model-side mean response du_k(t) on the control grid."""
    times: np.ndarray
    kappa: np.ndarray  # (n_t, N)
    mean_resp: np.ndarray  # (n_t, N)
    strategy: StrategyChoice
    diagnostics: InversionDiagnostics

    @property
    def dim(self) -> int:
        return int(self.kappa.shape[1])
