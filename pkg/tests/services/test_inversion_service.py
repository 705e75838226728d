import unittest

import numpy as np

from turbulence_energy_control.models.control import ControlProblem, ControlSolution
from turbulence_energy_control.models.experiment import SystemSpec
from turbulence_energy_control.models.forcing import InversionContext, InversionScheme, Order, StrategyChoice
from turbulence_energy_control.models.kernels import CovResponseKernel, KernelProvenance, MeanResponseKernel
from turbulence_energy_control.models.triad import TriadParams
from turbulence_energy_control.services.control_service import ControlService
from turbulence_energy_control.services.dynamics_service import DynamicsService
from turbulence_energy_control.services.inversion_service import InversionService, SingularInversionError

PROVENANCE = KernelProvenance(seed=0, t_sample=0.0, dtau=0.0, tau_max=0.0, n_samples=0, system_hash="synthetic")
ALL_STRATEGIES = ("low-lr", "low-closure", "high-lr", "high-closure")


def diagonal_kernel(dim: int, dtau: float, tau_max: float, scale: float = 1.0) -> MeanResponseKernel:
    lags = dtau * np.arange(int(round(tau_max / dtau)) + 1)
    values = scale * np.exp(-lags)[:, None, None] * np.eye(dim)
    return MeanResponseKernel(dtau=dtau, values=values, provenance=PROVENANCE)


class TestInversionService(unittest.TestCase):

    def setUp(self):
        """Set up test environment for each test."""
        self.dynamics = DynamicsService()
        self.control_service = ControlService()
        self.service = InversionService(dynamics_service=self.dynamics)
        self.triad = self.dynamics.make_triad(TriadParams.from_vectors(
            (1.0, 1.0, 1.0), (3.0, 2.0, -1.0), (1.0, -0.6, -0.4), (1.0, 1.0, -1.0), (0.5, 0.5, 0.5)
        ))
        self.mean_eq = np.array([1.5, 1.2, -1.4])

    def solve_control(self, E0=1.0, T=2.0, dt=0.01, dim=3, active_modes=None):
        problem = ControlProblem(d=1.0, alpha=np.ones(dim), k_T=0.0, T=T, dt=dt, E0=E0, active_modes=active_modes)
        return self.control_service.solve(problem)

    def context(
            self,
            forcing_pert=(0.0, 0.0, 0.0),
            mean_kernel=None,
            mean_eq=None,
            initial_response=None,
            cov_kernel=None,
            scheme=InversionScheme.INCREMENT,
    ):
        return InversionContext(
            system=self.triad,
            mean_eq=self.mean_eq if mean_eq is None else mean_eq,
            forcing_pert=np.asarray(forcing_pert, dtype=float),
            initial_response=np.zeros(3) if initial_response is None else initial_response,
            mean_kernel=diagonal_kernel(3, 0.01, 10.0) if mean_kernel is None else mean_kernel,
            cov_kernel=cov_kernel,
            cov_eq=0.5 * np.eye(3),
            scheme=scheme,
        )

    def test_zero_perturbation_gives_zero_forcing(self):
        """Test that E'(0) = 0 and dF_p = 0 give kappa = 0 for every strategy."""
        rng = np.random.default_rng(0)
        values = rng.normal(scale=0.1, size=(11, 3, 3, 3))
        cov_kernel = CovResponseKernel(dtau=0.1, values=0.5 * (values + values.transpose(0, 2, 1, 3)), provenance=PROVENANCE)
        control = self.solve_control(E0=0.0, T=1.0, dt=0.1)
        ctx = self.context(cov_kernel=cov_kernel, mean_kernel=diagonal_kernel(3, 0.1, 1.0))
        for label in ALL_STRATEGIES:
            solution = self.service.invert(control, StrategyChoice.from_label(label), ctx)
            np.testing.assert_array_equal(solution.kappa, 0.0)
            self.assertFalse(solution.diagnostics.alternate_equilibrium)

    def test_zero_kernel_gives_quasi_static_forcing(self):
        """Test kappa = C / u_eq when the mean does not respond at all."""
        zero = diagonal_kernel(3, 0.01, 1.0, scale=0.0)
        control = self.solve_control()
        for label in ("low-lr", "high-lr"):
            solution = self.service.invert(control, StrategyChoice.from_label(label), self.context(mean_kernel=zero))
            np.testing.assert_allclose(solution.kappa, control.C / self.mean_eq, rtol=0, atol=1e-8)
            np.testing.assert_array_equal(solution.mean_resp, 0.0)

    def test_initial_forcing_by_order(self):
        """Test kappa(0) = 0.25 at low order and 0.2 at high order for u_eq = 2, F = 1, C = 1, du = 0.5."""
        system = self.dynamics.build_system(SystemSpec(model="custom", params={"dim": 1, "damping": 1.0, "F": 1.0}))
        control = ControlSolution(
            times=np.array([0.0, 0.1, 0.2]), K=np.zeros(3), E_star=np.zeros(3), C=np.ones((3, 1)), dC=np.zeros((3, 1))
        )
        ctx = InversionContext(
            system=system, mean_eq=np.array([2.0]), forcing_pert=np.zeros(1),
            initial_response=np.array([0.5]), cov_eq=np.eye(1),
        )
        low = self.service.invert(control, StrategyChoice.from_label("low-closure"), ctx)
        high = self.service.invert(control, StrategyChoice.from_label("high-closure"), ctx)
        self.assertAlmostEqual(float(low.kappa[0, 0]), 0.25, places=14)
        self.assertAlmostEqual(float(high.kappa[0, 0]), 0.2, places=14)

    def test_closure_without_cov_kernel_reports_frozen_covariance(self):
        """Test that closure strategies without a covariance kernel carry a diagnostics warning."""
        control = self.solve_control(T=0.2)
        ctx = self.context(forcing_pert=[0.0, 0.0, -0.5])
        closure = self.service.invert(control, StrategyChoice.from_label("high-closure"), ctx)
        self.assertIn("no covariance kernel, closure covariance frozen at R_eq", closure.diagnostics.warnings)
        linear = self.service.invert(control, StrategyChoice.from_label("high-lr"), ctx)
        self.assertFalse(any("frozen" in w for w in linear.diagnostics.warnings))

    def test_high_order_reproduces_control(self):
        """Test that the high-order forcing satisfies the full relation at every node."""
        control = self.solve_control()
        ctx = self.context(forcing_pert=[0.0, 0.0, -0.5])
        solution = self.service.invert(control, StrategyChoice.from_label("high-lr"), ctx)
        residual = self.service.control_residual(solution, control, self.mean_eq, self.triad.forcing_eq)
        self.assertLessEqual(float(np.max(np.abs(residual))), 1e-10)
        self.assertLess(abs(float(solution.mean_resp[0, 2]) + 0.5), 1e-3)

    def test_low_order_residual_is_quadratic_term(self):
        """Test that the low-order forcing misses exactly kappa * du."""
        control = self.solve_control()
        solution = self.service.invert(control, StrategyChoice.from_label("low-lr"), self.context(forcing_pert=[0.0, 0.0, -0.5]))
        residual = self.service.control_residual(solution, control, self.mean_eq, self.triad.forcing_eq)
        np.testing.assert_allclose(residual, solution.kappa * solution.mean_resp, atol=1e-12)

    def test_order_gap_scales_quadratically(self):
        """Test that halving the perturbation shrinks the high/low forcing gap about fourfold."""
        def gap(scale):
            control = self.solve_control(E0=scale)
            ctx = self.context(forcing_pert=[0.0, 0.0, -scale])
            low = self.service.invert(control, StrategyChoice.from_label("low-lr"), ctx)
            high = self.service.invert(control, StrategyChoice.from_label("high-lr"), ctx)
            return float(np.max(np.abs(high.kappa - low.kappa)))

        gaps = [gap(s) for s in (0.1, 0.05, 0.025)]
        for coarse, fine in zip(gaps, gaps[1:]):
            self.assertGreaterEqual(coarse / fine, 3.0)
            self.assertLessEqual(coarse / fine, 5.0)

    def test_derivative_scheme_first_order(self):
        """Test that the derivative scheme converges at first order to the quasi-static forcing."""
        zero = diagonal_kernel(3, 0.01, 1.0, scale=0.0)

        def error(dt):
            control = self.solve_control(dt=dt)
            ctx = self.context(mean_kernel=zero, scheme=InversionScheme.DERIVATIVE)
            solution = self.service.invert(control, StrategyChoice.from_label("low-lr"), ctx)
            return float(np.max(np.abs(solution.kappa - control.C / self.mean_eq)))

        ratio = error(0.02) / error(0.01)
        self.assertGreater(ratio, 1.8)
        self.assertLess(ratio, 2.2)

    def test_order_overrides_mix_orders(self):
        """Test that an override switches a single mode to high order."""
        control = self.solve_control()
        ctx = self.context(forcing_pert=[0.0, 0.0, -0.5])
        mixed = StrategyChoice(Order.LOW, StrategyChoice.from_label("low-lr").mean_model, {2: Order.HIGH})
        low = self.service.invert(control, StrategyChoice.from_label("low-lr"), ctx)
        solution = self.service.invert(control, mixed, ctx)
        np.testing.assert_allclose(solution.kappa[:, :2], low.kappa[:, :2], atol=1e-12)
        residual = self.service.control_residual(solution, control, self.mean_eq, self.triad.forcing_eq)
        self.assertLessEqual(float(np.max(np.abs(residual[:, 2]))), 1e-10)

    def test_nonvanishing_forcing_flags_alternate_equilibrium(self):
        """Test that a forcing still on at T is flagged."""
        times = np.linspace(0.0, 1.0, 11)
        control = ControlSolution(times=times, K=np.zeros(11), E_star=np.zeros(11), C=np.full((11, 3), 0.5), dC=np.zeros((11, 3)))
        solution = self.service.invert(control, StrategyChoice.from_label("low-lr"), self.context(mean_kernel=diagonal_kernel(3, 0.1, 1.0, 0.0)))
        self.assertTrue(solution.diagnostics.alternate_equilibrium)
        self.assertTrue(any("alternate equilibrium" in w for w in solution.diagnostics.warnings))

    def test_vanishing_forcing_not_flagged(self):
        """Test that a control ending at zero is not flagged."""
        control = self.solve_control()
        solution = self.service.invert(control, StrategyChoice.from_label("low-lr"), self.context(mean_kernel=diagonal_kernel(3, 0.01, 1.0, 0.0)))
        self.assertFalse(solution.diagnostics.alternate_equilibrium)
        self.assertEqual(solution.diagnostics.terminal_kappa_norm, 0.0)

    def test_zero_equilibrium_mean_is_singular(self):
        """Test that a vanishing denominator on an active mode raises SingularInversionError."""
        control = self.solve_control()
        ctx = self.context(mean_eq=np.array([1.0, 0.0, 1.0]))
        with self.assertRaises(SingularInversionError) as cm:
            self.service.invert(control, StrategyChoice.from_label("low-lr"), ctx)
        self.assertEqual(cm.exception.mode, 1)

    def test_inactive_mode_skips_denominator(self):
        """Test that inactive modes get zero forcing even with a zero equilibrium mean."""
        control = self.solve_control(active_modes=(0, 2))
        ctx = self.context(mean_eq=np.array([1.0, 0.0, 1.0]))
        solution = self.service.invert(control, StrategyChoice.from_label("low-lr"), ctx)
        np.testing.assert_array_equal(solution.kappa[:, 1], 0.0)

    def test_linear_response_needs_kernel(self):
        """Test that linear-response inversion without a mean kernel raises ValueError."""
        ctx = InversionContext(system=self.triad, mean_eq=self.mean_eq, forcing_pert=np.zeros(3), initial_response=np.zeros(3))
        with self.assertRaises(ValueError):
            self.service.invert(self.solve_control(), StrategyChoice.from_label("high-lr"), ctx)
        with self.assertRaises(ValueError):
            self.service.invert(self.solve_control(), StrategyChoice.from_label("high-closure"), ctx)

    def test_predicted_and_measured_initial_response(self):
        """Test that linear-response runs record both initial mean responses."""
        ctx = self.context(forcing_pert=[0.0, 0.0, -0.5], initial_response=np.array([0.0, 0.0, -0.45]))
        solution = self.service.invert(self.solve_control(), StrategyChoice.from_label("low-lr"), ctx)
        diagnostics = solution.diagnostics.to_dict()
        self.assertEqual(diagnostics["measured_initial_response"], [0.0, 0.0, -0.45])
        self.assertAlmostEqual(diagnostics["predicted_initial_response"][2], -0.5, places=3)

    def test_translation_invariant_columns_agree(self):
        """Test that uniform pre-forcing on a Lorenz '96 ring gives identical forcing columns."""
        system = self.dynamics.make_lorenz96(8, 5.0)
        ctx = InversionContext(
            system=system,
            mean_eq=np.full(8, 2.0),
            forcing_pert=np.full(8, 3.0),
            initial_response=np.linspace(0.9, 1.1, 8),
            mean_kernel=diagonal_kernel(8, 0.05, 5.0),
            cov_eq=np.eye(8),
        )
        control = self.solve_control(E0=5.0, T=2.0, dt=0.05, dim=8)
        for label in ("high-closure", "high-lr"):
            solution = self.service.invert(control, StrategyChoice.from_label(label), ctx)
            self.assertLessEqual(float(np.max(np.ptp(solution.kappa, axis=1))), 1e-10)


if __name__ == '__main__':
    unittest.main()
