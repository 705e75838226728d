"""Service for the scalar optimal energy control problem."""
import logging

import numpy as np
from scipy import integrate

from turbulence_energy_control.models.control import ControlProblem, ControlSolution


class RiccatiError(ArithmeticError):
    """Backward Riccati integration produced an invalid solution."""


def _rk4_step(f, t: float, y: float, h: float) -> float:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# noinspection PyMethodMayBeStatic
class ControlService:
    """Riccati factor, optimal energy path and per-mode optimal controls."""

    def riccati_fixed_point(self, d: float, gain: float) -> float:
        """Positive root of a K^2 + 4 d K - 1 = 0, written without the cancellation at small a."""
        return 2.0 / (4.0 * d + np.sqrt(16.0 * d * d + 4.0 * gain))

    def solve_riccati(self, problem: ControlProblem) -> np.ndarray:
        """Integrate dK/dt = a K^2 + 4 d K - 1 backward from K(T) = k_T with RK4.

        Args:
            problem (ControlProblem): Problem definition; a is the sum of 1/alpha over active modes

        Returns:
            np.ndarray: K on the control grid 0, dt, ..., T
        """
        a = problem.control_gain
        d = problem.d
        n = problem.n_steps
        h = problem.dt

        def rhs(_t: float, k: float) -> float:
            return a * k * k + 4.0 * d * k - 1.0

        K = np.empty(n + 1)
        K[n] = problem.k_T
        for i in range(n, 0, -1):
            K[i - 1] = _rk4_step(rhs, i * h, K[i], -h)

        if not np.all(np.isfinite(K)):
            raise RiccatiError("Riccati factor became non-finite")
        k_inf = self.riccati_fixed_point(d, a)
        lo, hi = min(problem.k_T, k_inf), max(problem.k_T, k_inf)
        slack = 1e-9 * max(1.0, hi)
        if np.any(K < lo - slack) or np.any(K > hi + slack):
            raise RiccatiError(f"Riccati factor left [{lo:.6g}, {hi:.6g}]: range [{K.min():.6g}, {K.max():.6g}]")
        steps = np.diff(K)
        if np.any(steps > slack) and np.any(steps < -slack):
            raise RiccatiError("Riccati factor is not monotone on the grid")
        logging.info(f"ControlService.solve_riccati: K(0) = {K[0]:.8g}, K_inf = {k_inf:.8g}")
        return K

    def optimal_energy_and_controls(self, problem: ControlProblem, K: np.ndarray) -> ControlSolution:
        """E* forward by RK4, then C_k = -K E*/alpha_k and dC_k/dt = -E*(2dK - 1)/alpha_k.

        K at half steps comes from the cubic Hermite interpolant built from the Riccati
        right-hand side at the neighbouring nodes, which keeps the fourth order of RK4.
        Inactive modes get C_k = dC_k = 0.

        Args:
            problem (ControlProblem): Problem definition
            K (np.ndarray): Riccati factor on the problem grid

        Returns:
            ControlSolution: Optimal path and controls
        """
        K = np.asarray(K, dtype=float)
        n = problem.n_steps
        if K.shape != (n + 1,):
            raise ValueError(f"K must have {n + 1} grid values, got shape {K.shape}")
        a = problem.control_gain
        d = problem.d
        h = problem.dt

        slope = a * K * K + 4.0 * d * K - 1.0
        K_mid = 0.5 * (K[:-1] + K[1:]) + h / 8.0 * (slope[:-1] - slope[1:])

        E = np.empty(n + 1)
        E[0] = problem.E0
        for i in range(n):
            k1 = -(2.0 * d + a * K[i]) * E[i]
            k2 = -(2.0 * d + a * K_mid[i]) * (E[i] + 0.5 * h * k1)
            k3 = -(2.0 * d + a * K_mid[i]) * (E[i] + 0.5 * h * k2)
            k4 = -(2.0 * d + a * K[i + 1]) * (E[i] + h * k3)
            E[i + 1] = E[i] + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        inv_alpha = np.where(problem.active_mask, 1.0 / problem.alpha, 0.0)
        C = -np.outer(K * E, inv_alpha)
        dC = -np.outer(E * (2.0 * d * K - 1.0), inv_alpha)
        return ControlSolution(times=problem.grid, K=K, E_star=E, C=C, dC=dC, problem=problem)

    def solve(self, problem: ControlProblem) -> ControlSolution:
        return self.optimal_energy_and_controls(problem, self.solve_riccati(problem))

    def equilibrium_energy(self, mean_eq: np.ndarray, forcing_eq: np.ndarray, d: float, noise: np.ndarray) -> float:
        """E_eq = u_eq.F_eq / 2d + sum(sigma^2) / 4d."""
        if d <= 0:
            raise ValueError(f"Equilibrium energy needs positive damping, got d = {d}")
        mean_eq = np.asarray(mean_eq, dtype=float)
        noise = np.asarray(noise, dtype=float)
        return float(mean_eq @ np.asarray(forcing_eq, dtype=float)) / (2.0 * d) + float(noise @ noise) / (4.0 * d)

    def realized_cost(
            self, times: np.ndarray, energy_pert: np.ndarray, controls: np.ndarray, alpha: np.ndarray, k_T: float
    ) -> float:
        """int_0^T [E'^2 + sum_k alpha_k C_k^2] dt + k_T E'(T)^2 by the trapezoid rule."""
        energy_pert = np.asarray(energy_pert, dtype=float)
        running = energy_pert ** 2 + np.asarray(controls, dtype=float) ** 2 @ np.asarray(alpha, dtype=float)
        return float(integrate.trapezoid(running, times)) + k_T * float(energy_pert[-1]) ** 2
