"""Mean-response providers used while inverting the control-forcing relation."""
import logging
from typing import Protocol

import numpy as np
from scipy import integrate

from turbulence_energy_control.models.kernels import CovResponseKernel, MeanResponseKernel
from turbulence_energy_control.models.quadratic_system import QuadraticSystem
from turbulence_energy_control.services.dynamics_service import DynamicsService
from turbulence_energy_control.services.response_service import ResponseService

INDEFINITE_FRACTION = 0.5


class MeanResponseModel(Protocol):
    """Gives the mean-response rate du/dt at t from the kappa history and its own state."""

    def initial_response(self) -> np.ndarray:
        ...

    def rate(self, t: float, kappa_hist: np.ndarray, h: float, mean_pert: np.ndarray) -> np.ndarray:
        ...


class LinearResponseModel:
    """du/dt = R(0) kappa(t) + int_0^t R'(t - s) kappa(s) ds - R(t) dF_p."""

    def __init__(
            self,
            kernel: MeanResponseKernel,
            forcing_pert: np.ndarray,
            response_service: ResponseService | None = None,
    ) -> None:
        self.response_service = response_service or ResponseService()
        self.kernel = kernel
        self.forcing_pert = np.asarray(forcing_pert, dtype=float)
        self.derivative = self.response_service.lag_derivative(kernel.values, kernel.dtau)
        self.cumulative = integrate.cumulative_trapezoid(kernel.values, dx=kernel.dtau, axis=0, initial=0)

    def initial_response(self) -> np.ndarray:
        """Response at t = 0 to the pre-forcing, from the kernel tail."""
        return np.asarray(self.response_service.tail_integral(
            self.kernel.values, self.kernel.dtau, self.forcing_pert, 0.0, cumulative=self.cumulative
        ))

    def rate(self, t: float, kappa_hist: np.ndarray, h: float, mean_pert: np.ndarray | None = None) -> np.ndarray:
        values = self.kernel.values
        dtau = self.kernel.dtau
        instantaneous = values[0] @ kappa_hist[-1]
        history = self.response_service.convolve(self.derivative, dtau, kappa_hist, h, t)
        relaxation = self.response_service.kernel_at(values, dtau, t) @ self.forcing_pert
        return instantaneous + history - relaxation


class MeanClosureModel:
    """Full mean equation with the covariance supplied by linear response around R_eq.

    The closed rate is (L + D)u + B(u, u) + sum_ij R_ij(t) B(e_i, e_j) + F_eq + kappa with
    R(t) = R_eq + int_0^t R_R(t - s) kappa(s) ds + dF_p int_t^inf R_R. With anchoring,
    the rate at (u_eq, R_eq, kappa = 0) is subtracted so u_eq is an exact fixed point.
    """

    def __init__(
            self,
            system: QuadraticSystem,
            mean_eq: np.ndarray,
            cov_eq: np.ndarray,
            forcing_pert: np.ndarray,
            initial_response: np.ndarray,
            cov_kernel: CovResponseKernel | None = None,
            anchor: bool = True,
            dynamics_service: DynamicsService | None = None,
            response_service: ResponseService | None = None,
    ) -> None:
        self.dynamics_service = dynamics_service or DynamicsService()
        self.response_service = response_service or ResponseService()
        self.system = system
        self.mean_eq = np.asarray(mean_eq, dtype=float)
        self.cov_eq = np.asarray(cov_eq, dtype=float)
        self.forcing_pert = np.asarray(forcing_pert, dtype=float)
        self._initial = np.asarray(initial_response, dtype=float)
        self.cov_kernel = cov_kernel
        self.contraction_eq = self.dynamics_service.covariance_contraction(system, self.cov_eq)
        self.warnings: list[str] = []

        if cov_kernel is not None:
            # (lag, j, k, l) -> (lag, l, j, k) so the contraction acts on the trailing pair
            contracted = self.dynamics_service.covariance_contraction(system, cov_kernel.values.transpose(0, 3, 1, 2))
            self.contracted = contracted.transpose(0, 2, 1)  # (lag, i, l)
            self.contracted_cumulative = integrate.cumulative_trapezoid(
                self.contracted, dx=cov_kernel.dtau, axis=0, initial=0
            )
        else:
            message = "no covariance kernel, closure covariance frozen at R_eq"
            logging.warning(f"MeanClosureModel: {message}")
            self.warnings.append(message)
            self.contracted = None
            self.contracted_cumulative = None

        self.anchor_rate = np.zeros(system.dim)
        if anchor:
            self.anchor_rate = self.dynamics_service.drift(system, self.mean_eq, system.forcing_eq) + self.contraction_eq

    def initial_response(self) -> np.ndarray:
        """The measured mean perturbation at t = 0."""
        return self._initial

    def covariance_feedback(self, t: float, kappa_hist: np.ndarray, h: float) -> np.ndarray:
        """sum_jk b_ijk R_jk(t) for the linearly responding covariance."""
        feedback = self.contraction_eq
        if self.contracted is not None:
            dtau = self.cov_kernel.dtau
            feedback = feedback + self.response_service.convolve(self.contracted, dtau, kappa_hist, h, t)
            feedback = feedback + self.response_service.tail_integral(
                self.contracted, dtau, self.forcing_pert, t, cumulative=self.contracted_cumulative
            )
        return feedback

    def rate(self, t: float, kappa_hist: np.ndarray, h: float, mean_pert: np.ndarray) -> np.ndarray:
        mean = self.mean_eq + mean_pert
        full = (
            self.dynamics_service.drift(self.system, mean, self.system.forcing_eq)
            + self.covariance_feedback(t, kappa_hist, h)
            + kappa_hist[-1]
        )
        return full - self.anchor_rate

    def assembled_covariance(self, t: float, kappa_hist: np.ndarray, h: float) -> np.ndarray:
        """R(t) itself, for validity checks."""
        cov = self.cov_eq.copy()
        if self.cov_kernel is not None:
            values, dtau = self.cov_kernel.values, self.cov_kernel.dtau
            cov = cov + self.response_service.convolve(values, dtau, kappa_hist, h, t)
            cov = cov + self.response_service.tail_integral(values, dtau, self.forcing_pert, t)
        return cov

    def check_covariance(self, t: float, kappa_hist: np.ndarray, h: float) -> str | None:
        """Warning text when the assembled covariance is far from positive semi-definite."""
        if self.cov_kernel is None:
            return None
        cov = self.assembled_covariance(t, kappa_hist, h)
        lowest = float(np.min(np.linalg.eigvalsh(0.5 * (cov + cov.T))))
        bound = -INDEFINITE_FRACTION * float(np.trace(self.cov_eq)) / self.system.dim
        if lowest < bound:
            message = (
                f"closure covariance indefinite at t = {t:.4g} (eigenvalue {lowest:.3g} < {bound:.3g}); "
                f"linear response pushed beyond validity"
            )
            logging.warning(f"MeanClosureModel: {message}")
            return message
        return None
