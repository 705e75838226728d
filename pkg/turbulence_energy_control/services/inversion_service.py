"""Service for inverting the control-forcing relation into a forcing perturbation."""
import logging

import numpy as np

from turbulence_energy_control.models.control import ControlSolution
from turbulence_energy_control.models.forcing import (
    ForcingSolution,
    InversionContext,
    InversionDiagnostics,
    InversionScheme,
    MeanModel,
    StrategyChoice,
)
from turbulence_energy_control.models.kernels import CovResponseKernel, MeanResponseKernel
from turbulence_energy_control.models.quadratic_system import QuadraticSystem
from turbulence_energy_control.services.dynamics_service import DynamicsService
from turbulence_energy_control.services.mean_response import (
    LinearResponseModel,
    MeanClosureModel,
    MeanResponseModel,
)
from turbulence_energy_control.services.response_service import ResponseService

DENOMINATOR_FLOOR = 1e-6
ALTERNATE_EQUILIBRIUM_FRACTION = 1e-2
COVARIANCE_CHECKS = 20


class SingularInversionError(ArithmeticError):
    """The control-forcing relation cannot be solved for kappa."""

    def __init__(self, mode: int, time: float, detail: str) -> None:
        super().__init__(f"Inversion singular for mode {mode + 1} at t = {time:.6g}: {detail}")
        self.mode = mode
        self.time = time


class InversionService:
    """Couples the kappa equation of a strategy with its mean-response provider."""

    def __init__(
            self,
            dynamics_service: DynamicsService | None = None,
            response_service: ResponseService | None = None,
    ) -> None:
        self.dynamics_service = dynamics_service or DynamicsService()
        self.response_service = response_service or ResponseService()

    def build_provider(self, strategy: StrategyChoice, ctx: InversionContext) -> MeanResponseModel:
        """Mean-response provider for the strategy's mean model."""
        if strategy.mean_model is MeanModel.LINEAR_RESPONSE:
            if ctx.mean_kernel is None:
                raise ValueError("Linear-response inversion needs a mean response kernel")
            return LinearResponseModel(ctx.mean_kernel, ctx.forcing_pert, self.response_service)
        if ctx.cov_eq is None:
            raise ValueError("Mean-closure inversion needs the equilibrium covariance")
        return MeanClosureModel(
            system=ctx.system,
            mean_eq=ctx.mean_eq,
            cov_eq=ctx.cov_eq,
            forcing_pert=ctx.forcing_pert,
            initial_response=ctx.initial_response,
            cov_kernel=ctx.cov_kernel,
            anchor=ctx.closure_anchor,
            dynamics_service=self.dynamics_service,
            response_service=self.response_service,
        )

    def invert(self, control: ControlSolution, strategy: StrategyChoice, ctx: InversionContext) -> ForcingSolution:
        """Integrate kappa and the provider's mean response jointly on the control grid.

        Each step computes du/dt from the kappa history up to the current node, advances the
        mean response by explicit Euler, then advances kappa. In the increment scheme kappa is
        set so the control-forcing relation (full for high order, without kappa*du for low
        order) holds exactly at the new node; the derivative scheme uses dC/dt instead.

        Args:
            control (ControlSolution): Optimal controls on the control grid
            strategy (StrategyChoice): Order and mean model
            ctx (InversionContext): System, equilibrium moments, pre-forcing and kernels

        Returns:
            ForcingSolution: kappa and the model-side mean response on the control grid
        """
        times = control.times
        h = control.dt
        n_t = times.size
        dim = ctx.system.dim
        mean_eq = np.asarray(ctx.mean_eq, dtype=float)
        forcing_eq = ctx.forcing_eq
        high = strategy.high_order_mask(dim)
        active = control.problem.active_mask if control.problem is not None else np.ones(dim, dtype=bool)
        floor = DENOMINATOR_FLOOR * np.maximum(1.0, np.abs(mean_eq))

        provider = self.build_provider(strategy, ctx)
        # translation-invariant system with uniform pre-forcing and controls: the exact solution is uniform
        symmetric = (
            ctx.system.translation_invariant
            and np.ptp(np.asarray(ctx.forcing_pert, dtype=float)) == 0
            and bool(np.all(np.ptp(control.C, axis=1) == 0))
        )
        du0 = np.asarray(provider.initial_response(), dtype=float)
        if symmetric:
            du0 = np.full(dim, float(du0.mean()))
        diagnostics = InversionDiagnostics(denominator_min=np.full(dim, np.inf))
        if isinstance(provider, MeanClosureModel):
            diagnostics.warnings.extend(provider.warnings)
        measured = np.asarray(ctx.initial_response, dtype=float)
        diagnostics.measured_initial_response = measured
        if strategy.mean_model is MeanModel.LINEAR_RESPONSE:
            diagnostics.predicted_initial_response = du0
            logging.info(
                f"InversionService.invert: predicted du(0) = {np.round(du0, 6).tolist()}, "
                f"measured du(0) = {np.round(measured, 6).tolist()}"
            )

        kappa = np.zeros((n_t, dim))
        response = np.zeros((n_t, dim))
        response[0] = du0
        kappa[0] = self._solve_node(control.C[0], response[0], mean_eq, forcing_eq, high, active, floor, 0.0, diagnostics)

        check_every = max(1, (n_t - 1) // COVARIANCE_CHECKS)
        for n in range(n_t - 1):
            t = times[n]
            rate = provider.rate(t, kappa[:n + 1], h, response[n])
            response[n + 1] = response[n] + h * rate
            if symmetric:
                response[n + 1] = float(response[n + 1].mean())
            if ctx.scheme is InversionScheme.INCREMENT:
                kappa[n + 1] = self._solve_node(
                    control.C[n + 1], response[n + 1], mean_eq, forcing_eq, high, active, floor, times[n + 1], diagnostics
                )
            else:
                den = mean_eq + np.where(high, response[n], 0.0)
                self._check_denominator(den, active, floor, t, diagnostics)
                coupling = forcing_eq + np.where(high, kappa[n], 0.0)
                kappa[n + 1] = np.where(active, kappa[n] + h * (control.dC[n] - coupling * rate) / den, 0.0)
            if not np.all(np.isfinite(kappa[n + 1])):
                bad = int(np.flatnonzero(~np.isfinite(kappa[n + 1]))[0])
                raise SingularInversionError(bad, times[n + 1], "forcing perturbation became non-finite")
            if isinstance(provider, MeanClosureModel) and ((n + 1) % check_every == 0 or n + 2 == n_t):
                warning = provider.check_covariance(times[n + 1], kappa[:n + 2], h)
                if warning and not any(w.startswith("closure covariance") for w in diagnostics.warnings):
                    diagnostics.warnings.append(warning)

        norms = np.linalg.norm(kappa, axis=1)
        diagnostics.terminal_kappa_norm = float(norms[-1])
        diagnostics.max_kappa_norm = float(norms.max())
        if diagnostics.max_kappa_norm > 0 and norms[-1] > ALTERNATE_EQUILIBRIUM_FRACTION * diagnostics.max_kappa_norm:
            diagnostics.alternate_equilibrium = True
            message = (
                f"forcing perturbation does not vanish at T: |kappa(T)| = {norms[-1]:.4g} "
                f"vs max {diagnostics.max_kappa_norm:.4g}; the control may be steering to an alternate equilibrium"
            )
            logging.warning(f"InversionService.invert [{strategy.label}]: {message}")
            diagnostics.warnings.append(message)
        logging.info(f"InversionService.invert [{strategy.label}]: |kappa(0)| = {norms[0]:.4g}, |kappa(T)| = {norms[-1]:.4g}")
        return ForcingSolution(times=times.copy(), kappa=kappa, mean_resp=response, strategy=strategy, diagnostics=diagnostics)

    def _check_denominator(
            self, den: np.ndarray, active: np.ndarray, floor: np.ndarray, t: float, diagnostics: InversionDiagnostics
    ) -> None:
        magnitude = np.abs(den)
        diagnostics.denominator_min = np.where(active, np.minimum(diagnostics.denominator_min, magnitude), diagnostics.denominator_min)
        small = active & (magnitude < floor)
        if np.any(small):
            mode = int(np.flatnonzero(small)[0])
            raise SingularInversionError(mode, t, f"|denominator| = {magnitude[mode]:.3e} below {floor[mode]:.3e}")

    def _solve_node(
            self,
            C: np.ndarray,
            response: np.ndarray,
            mean_eq: np.ndarray,
            forcing_eq: np.ndarray,
            high: np.ndarray,
            active: np.ndarray,
            floor: np.ndarray,
            t: float,
            diagnostics: InversionDiagnostics,
    ) -> np.ndarray:
        """kappa with C = u_eq kappa + F_eq du (+ kappa du for high-order modes) at one node."""
        den = mean_eq + np.where(high, response, 0.0)
        self._check_denominator(den, active, floor, t, diagnostics)
        safe = np.where(active, den, 1.0)
        return np.where(active, (C - forcing_eq * response) / safe, 0.0)

    def mean_response_rate_linear(
            self, kernel: MeanResponseKernel, kappa_hist: np.ndarray, forcing_pert: np.ndarray, t: float, h: float
    ) -> np.ndarray:
        """du/dt of the mean linear response at t, kappa_hist sampled on 0, h, ..., t."""
        return LinearResponseModel(kernel, forcing_pert, self.response_service).rate(t, np.atleast_2d(kappa_hist), h)

    def mean_response_rate_closure(
            self,
            system: QuadraticSystem,
            mean_current: np.ndarray,
            cov_kernel: CovResponseKernel | None,
            cov_eq: np.ndarray,
            kappa_hist: np.ndarray,
            forcing_pert: np.ndarray,
            t: float,
            h: float,
    ) -> np.ndarray:
        """Un-anchored right-hand side of the closed mean equation at the full mean state."""
        model = MeanClosureModel(
            system=system,
            mean_eq=np.zeros(system.dim),
            cov_eq=cov_eq,
            forcing_pert=forcing_pert,
            initial_response=np.zeros(system.dim),
            cov_kernel=cov_kernel,
            anchor=False,
            dynamics_service=self.dynamics_service,
            response_service=self.response_service,
        )
        return model.rate(t, np.atleast_2d(kappa_hist), h, np.asarray(mean_current, dtype=float))

    def control_residual(
            self, forcing: ForcingSolution, control: ControlSolution, mean_eq: np.ndarray, forcing_eq: np.ndarray
    ) -> np.ndarray:
        """Full control-forcing relation evaluated on the inversion output minus C_k(t)."""
        kappa, du = forcing.kappa, forcing.mean_resp
        return mean_eq * kappa + forcing_eq * du + kappa * du - control.C
