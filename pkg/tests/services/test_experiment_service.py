import json
import os
import tempfile
import unittest
from unittest.mock import MagicMock

import numpy as np

from turbulence_energy_control.models.experiment import ConfigError
from turbulence_energy_control.services.experiment_service import (
    CONTROL_STAGES,
    ExperimentService,
    INVERSION_STAGES,
    KERNEL_STAGES,
    UNCONTROLLED,
)
from turbulence_energy_control.utils import StageError

SMALL_RUN = {
    "preset": "triad-regime1",
    "name": "small",
    "perturbation": [0.0, 0.0, -1.0],
    "protocol": {"T_spin": 2.0, "T_pert": 1.0, "T": 0.5, "dt": 0.01, "dt_out": 0.05, "control_dt": 0.05},
    "control": {"alpha": 1.0, "k_T": 0.0},
    "kernels": {"T_sample": 40.0, "dtau": 0.05, "tau_max": 1.0, "n_chains": 4, "burn_in": 1.0},
    "ensemble": {"size": 64},
    "seed": 7,
}


def small_document(**overrides):
    document = json.loads(json.dumps(SMALL_RUN))
    document.update(overrides)
    return document


class TestValidateConfig(unittest.TestCase):

    def setUp(self):
        """Set up test environment for each test."""
        self.service = ExperimentService(max_workers=1)

    def check(self, report, name):
        return next(c for c in report.checks if c.name == name)

    def test_preset_passes(self):
        """Test that the reference triad preset validates cleanly."""
        report = self.service.validate_config({"preset": "triad-regime1"})
        self.assertTrue(report.passed, report.reasons())
        self.assertEqual(report.flags["dim"], 3)
        self.assertEqual(len(report.flags["strategies"]), 4)

    def test_all_presets_pass(self):
        """Test that every shipped preset validates."""
        for name in ("triad-regime1", "triad-regime2", "triad-alt-eq", "lorenz96-5to8"):
            report = self.service.validate_config({"preset": name})
            self.assertTrue(report.passed, f"{name}: {report.reasons()}")

    def test_nonpositive_alpha(self):
        """Test that alpha = -1 fails with the control weight reason."""
        report = self.service.validate_config(small_document(control={"alpha": -1.0}))
        self.assertFalse(report.passed)
        self.assertIn("nonpositive control weight", self.check(report, "control_weights").detail)

    def test_nonuniform_damping_needs_no_strategy(self):
        """Test that non-uniform damping fails for a strategy but passes for strategy none."""
        system = {
            "model": "custom",
            "dim": 2,
            "skew": [[0.0, 1.0], [-1.0, 0.0]],
            "damping": [1.0, 2.0],
            "F": [0.0, 0.0],
            "sigma": 0.5,
        }
        document = {
            "system": system,
            "perturbation": 0.5,
            "protocol": {"T_spin": 1.0, "T_pert": 0.0, "T": 1.0, "dt": 0.01, "dt_out": 0.1, "control_dt": 0.1},
            "kernels": {"T_sample": 100.0, "tau_max": 1.0, "n_chains": 4},
            "strategy": "high-closure",
        }
        report = self.service.validate_config(document)
        self.assertFalse(report.passed)
        self.assertEqual(self.check(report, "uniform_damping").detail, "energy control requires uniform damping")

        document["strategy"] = "none"
        report = self.service.validate_config(document)
        self.assertTrue(report.passed, report.reasons())

    def test_unknown_preset(self):
        """Test that an unknown preset stops validation at the first check."""
        report = self.service.validate_config({"preset": "no-such-preset"})
        self.assertFalse(report.passed)
        self.assertEqual([c.name for c in report.checks], ["preset_known"])

    def test_misaligned_time_grid(self):
        """Test that T not a multiple of dt_out fails the grid check."""
        document = small_document()
        document["protocol"] = dict(document["protocol"], T=0.52)
        report = self.service.validate_config(document)
        self.assertFalse(self.check(report, "time_grids_aligned").passed)

    def test_nonpositive_times(self):
        """Test that a zero step is reported and grid alignment is not attempted."""
        document = small_document()
        document["protocol"] = dict(document["protocol"], dt=0.0)
        report = self.service.validate_config(document)
        self.assertIn("dt=0.0", self.check(report, "positive_times").detail)
        self.assertNotIn("time_grids_aligned", [c.name for c in report.checks])

    def test_broken_structure(self):
        """Test that a non-conserving triad coupling fails before any simulation."""
        document = small_document()
        document["system"] = {"B": [1.0, 1.0, 1.0]}
        report = self.service.validate_config(document)
        self.assertIn("B1 + B2 + B3 = 0", self.check(report, "system_valid").detail)
        self.assertNotIn("energy_conserving_structure", [c.name for c in report.checks])

    def test_kernel_sampling_window(self):
        """Test that too few samples per chain for the lag window is rejected."""
        document = small_document()
        document["kernels"] = dict(document["kernels"], T_sample=4.0)
        report = self.service.validate_config(document)
        self.assertFalse(self.check(report, "kernel_sampling_window").passed)

    def test_lr_strategy_needs_mean_kernel(self):
        """Test that linear-response strategies cannot run on a covariance-only estimate."""
        document = small_document(strategy="low-lr")
        document["kernels"] = dict(document["kernels"], which="cov")
        report = self.service.validate_config(document)
        self.assertFalse(self.check(report, "mean_kernel_available").passed)

    def test_perturbation_shape(self):
        """Test that a perturbation of the wrong length is rejected."""
        report = self.service.validate_config(small_document(perturbation=[1.0, 2.0]))
        self.assertFalse(self.check(report, "perturbation_shape").passed)

    def test_unknown_strategy(self):
        """Test that an unknown strategy label is rejected."""
        report = self.service.validate_config(small_document(strategy="medium-lr"))
        self.assertFalse(self.check(report, "strategy_known").passed)


class TestLoadDocument(unittest.TestCase):

    def setUp(self):
        """Set up test environment for each test."""
        self.service = ExperimentService(max_workers=1)
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, text):
        path = os.path.join(self.tmp.name, "config.json")
        with open(path, "w") as f:
            f.write(text)
        return path

    def test_invalid_json_reports_line(self):
        """Test that a syntax error raises ConfigError with its line number."""
        path = self.write('{\n  "preset": "triad-regime1",\n  "seed": ,\n}')
        with self.assertRaises(ConfigError) as ctx:
            self.service.load_document(path)
        self.assertEqual(ctx.exception.line, 3)
        self.assertIn("line 3", str(ctx.exception))

    def test_missing_file(self):
        """Test that an unreadable file raises ConfigError."""
        with self.assertRaises(ConfigError):
            self.service.load_document(os.path.join(self.tmp.name, "missing.json"))

    def test_non_object_document(self):
        """Test that a JSON list is rejected."""
        with self.assertRaises(ConfigError):
            self.service.load_document(self.write("[1, 2]"))

    def test_preset_and_overrides(self):
        """Test that the preset argument and overrides are merged over the file."""
        path = self.write(json.dumps({"preset": "triad-alt-eq", "seed": 3, "control": {"alpha": 0.5, "k_T": 1.0}}))
        document = self.service.load_document(path, preset="triad-regime1", overrides={"control": {"alpha": 2.0}})
        self.assertEqual(document["preset"], "triad-regime1")
        self.assertEqual(document["control"], {"alpha": 2.0, "k_T": 1.0})

    def test_resolve_merges_preset(self):
        """Test that parsing merges the named preset under the document."""
        cfg = self.service.parse({"preset": "triad-regime1", "ensemble": {"size": 100}})
        self.assertEqual(cfg.ensemble.size, 100)
        self.assertEqual(cfg.system.params["L"], [3.0, 2.0, -1.0])
        self.assertEqual(cfg.name, "triad-regime1")
        self.assertAlmostEqual(cfg.kernel_dtau, 0.01)


class TestRunExperiment(unittest.TestCase):

    def setUp(self):
        """Set up test environment for each test."""
        self.service = ExperimentService(max_workers=2)
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def directory(self, name):
        return os.path.join(self.tmp.name, name)

    def test_full_pipeline_writes_all_outputs(self):
        """Test a small triad run with every strategy end to end."""
        cfg = self.service.parse(small_document())
        self.assertTrue(self.service.validate_config(cfg).passed)
        out = self.directory("full")
        result = self.service.run_experiment(cfg, out)

        expected = [
            "equilibrium.json",
            os.path.join("kernels", "kernels.json"),
            os.path.join("kernels", "mean_kernel.csv"),
            os.path.join("kernels", "cov_kernel.csv"),
            "control.csv",
            "energy_optimal.csv",
            f"moments_{UNCONTROLLED}.csv",
            f"cov_{UNCONTROLLED}.csv",
            "comparison.json",
            "manifest.json",
        ]
        for label in ("low-lr", "low-closure", "high-lr", "high-closure"):
            expected.extend([
                f"forcing_{label}.csv",
                f"forcing_{label}_diagnostics.json",
                f"moments_{label}.csv",
                f"empirical_control_{label}.csv",
            ])
        for name in expected:
            self.assertTrue(os.path.exists(os.path.join(out, name)), name)
        self.assertFalse(os.path.exists(os.path.join(out, "FAILED")))

        with open(os.path.join(out, "manifest.json")) as f:
            manifest = json.load(f)
        self.assertFalse(manifest["failed"])
        self.assertEqual(manifest["seed"], 7)
        self.assertEqual(manifest["stages"]["summary"]["Status"], "completed")
        self.assertAlmostEqual(manifest["horizon"]["natural_decay_times"], 1.0)

        self.assertEqual(set(result.comparison["runs"]), {UNCONTROLLED, "low-lr", "low-closure", "high-lr", "high-closure"})
        self.assertIn("energy_balance", result.comparison)
        self.assertEqual(result.series[UNCONTROLLED].times.size, 11)
        np.testing.assert_allclose(result.control.times, np.linspace(0.0, 0.5, 11))

    def test_zero_perturbation_matches_uncontrolled(self):
        """Test that no pre-forcing gives zero forcing and the uncontrolled statistics bitwise."""
        cfg = self.service.parse(small_document(perturbation=0.0, strategy="high-closure"))
        result = self.service.run_experiment(cfg, self.directory("zero"), stages=[
            "system", "spin_up", "kernels", "control", "inversion", "ensemble",
        ])
        self.assertEqual(result.initial_snapshot.energy_pert, 0.0)
        np.testing.assert_array_equal(result.forcings["high-closure"].kappa, 0.0)
        baseline = result.series[UNCONTROLLED]
        controlled = result.series["high-closure"]
        np.testing.assert_array_equal(controlled.mean, baseline.mean)
        np.testing.assert_array_equal(controlled.energy, baseline.energy)

    def test_reproducible_outputs(self):
        """Test that two runs with the same seed write identical series."""
        cfg = self.service.parse(small_document(strategy="low-closure"))
        stages = ["system", "spin_up", "kernels", "control", "inversion", "ensemble"]
        first = self.directory("first")
        second = self.directory("second")
        self.service.run_experiment(cfg, first, stages=stages)
        ExperimentService(max_workers=1).run_experiment(cfg, second, stages=stages)
        for name in ("moments_uncontrolled.csv", "moments_low-closure.csv", "forcing_low-closure.csv", "control.csv"):
            with open(os.path.join(first, name), "rb") as a, open(os.path.join(second, name), "rb") as b:
                self.assertEqual(a.read(), b.read(), name)

    def test_control_stages_only(self):
        """Test that the control stages write the optimal path without kernels."""
        cfg = self.service.parse(small_document())
        out = self.directory("control")
        result = self.service.run_experiment(cfg, out, stages=CONTROL_STAGES)
        self.assertIsNotNone(result.control)
        self.assertIsNone(result.kernels)
        self.assertTrue(os.path.exists(os.path.join(out, "control.csv")))
        self.assertFalse(os.path.exists(os.path.join(out, "kernels")))
        self.assertAlmostEqual(float(result.control.E_star[0]), result.initial_snapshot.energy_pert)

    def test_unknown_stage(self):
        """Test that an unknown stage name raises ValueError."""
        cfg = self.service.parse(small_document())
        with self.assertRaises(ValueError):
            self.service.run_experiment(cfg, self.directory("bad"), stages=["system", "plot"])

    def test_stage_without_dependencies(self):
        """Test that control or ensemble without spin_up is refused before anything is written."""
        cfg = self.service.parse(small_document())
        for stages, message in (
                (["system", "control"], "control needs spin_up"),
                (["system", "ensemble", "summary"], "ensemble needs spin_up"),
                (["system", "spin_up", "control", "inversion"], "inversion needs kernels"),
                (["kernels"], "kernels needs system"),
        ):
            with self.subTest(stages=stages):
                out = self.directory("incomplete")
                with self.assertRaises(ConfigError) as ctx:
                    self.service.run_experiment(cfg, out, stages=stages)
                self.assertIn(message, str(ctx.exception))
                self.assertFalse(os.path.exists(out))

    def test_failed_stage_leaves_marker_and_manifest(self):
        """Test that a failing spin-up writes FAILED and still writes the manifest."""
        ensemble_service = MagicMock()
        ensemble_service.prepare_initial_state.side_effect = FloatingPointError("ensemble blew up")
        service = ExperimentService(ensemble_service=ensemble_service, max_workers=1)
        cfg = service.parse(small_document())
        out = self.directory("failed")

        with self.assertRaises(StageError) as ctx:
            service.run_experiment(cfg, out, stages=CONTROL_STAGES)

        self.assertEqual(ctx.exception.stage, "spin_up")
        with open(os.path.join(out, "FAILED")) as f:
            marker = f.read()
        self.assertIn("stage: spin_up", marker)
        self.assertIn("ensemble blew up", marker)
        with open(os.path.join(out, "manifest.json")) as f:
            manifest = json.load(f)
        self.assertTrue(manifest["failed"])
        self.assertEqual(manifest["stages"]["system"]["Status"], "completed")
        self.assertEqual(manifest["stages"]["spin_up"]["Status"], "failed")
        self.assertEqual(manifest["stages"]["control"]["Status"], "pending")

    def test_rerun_clears_stale_marker(self):
        """Test that a successful run removes an earlier FAILED marker."""
        out = self.directory("stale")
        os.makedirs(out)
        with open(os.path.join(out, "FAILED"), "w") as f:
            f.write("stage: spin_up\n")
        cfg = self.service.parse(small_document())
        self.service.run_experiment(cfg, out, stages=["system"])
        self.assertFalse(os.path.exists(os.path.join(out, "FAILED")))

    def test_load_saved_kernels(self):
        """Test that kernels saved by one run are reused by the inversion of another."""
        cfg = self.service.parse(small_document(strategy="high-lr"))
        estimate_dir = self.directory("estimate")
        estimated = self.service.run_experiment(cfg, estimate_dir, stages=KERNEL_STAGES)

        document = small_document(strategy="high-lr")
        document["kernels"] = dict(document["kernels"], source="load", path=os.path.join(estimate_dir, "kernels"))
        loaded_cfg = self.service.parse(document)
        self.assertTrue(self.service.validate_config(loaded_cfg).passed)
        result = self.service.run_experiment(loaded_cfg, self.directory("loaded"), stages=INVERSION_STAGES)
        np.testing.assert_allclose(
            result.kernels.mean_kernel.values, estimated.kernels.mean_kernel.values, rtol=1e-12, atol=1e-15
        )
        self.assertIn("high-lr", result.forcings)

    def test_load_kernels_for_another_system(self):
        """Test that kernels estimated for a different system are refused."""
        cfg = self.service.parse(small_document())
        estimate_dir = self.directory("estimate")
        self.service.run_experiment(cfg, estimate_dir, stages=KERNEL_STAGES)

        document = small_document()
        document["system"] = {"F": [2.0, 1.0, -1.0]}
        document["kernels"] = dict(document["kernels"], source="load", path=os.path.join(estimate_dir, "kernels"))
        with self.assertRaises(StageError) as ctx:
            self.service.run_experiment(self.service.parse(document), self.directory("other"), stages=INVERSION_STAGES)
        self.assertEqual(ctx.exception.stage, "kernels")
        self.assertIn("another system", str(ctx.exception))

    def test_lorenz96_forcing_identical_across_modes(self):
        """Test that the Lorenz '96 preset inverts to the same forcing in every mode."""
        document = {
            "preset": "lorenz96-5to8",
            "name": "l96-small",
            "protocol": {"T_spin": 5.0, "T_pert": 1.0, "T": 0.5, "dt": 0.01, "dt_out": 0.05, "control_dt": 0.05},
            "kernels": {"T_sample": 240.0, "dtau": 0.05, "tau_max": 1.0, "n_chains": 8, "burn_in": 5.0, "cov_max_starts": 10},
            "ensemble": {"size": 32},
            "seed": 11,
        }
        cfg = self.service.parse(document)
        self.assertTrue(self.service.validate_config(cfg).passed)
        result = self.service.run_experiment(cfg, self.directory("l96"), stages=INVERSION_STAGES)

        kappa = result.forcings["high-closure"].kappa
        self.assertEqual(kappa.shape, (11, 40))
        self.assertLessEqual(float(np.max(np.ptp(kappa, axis=1))), 1e-10)
        self.assertGreater(float(np.max(np.abs(kappa))), 0.0)
        self.assertEqual(float(np.max(np.ptp(result.control.C, axis=1))), 0.0)


def preset_run(service, directory, preset, **overrides):
    """Full pipeline for a preset with reduced sample sizes."""
    document = {"preset": preset, "name": preset, "seed": 2024}
    document.update(overrides)
    cfg = service.parse(document)
    report = service.validate_config(cfg)
    if not report.passed:
        raise AssertionError(f"{preset}: {'; '.join(report.reasons())}")
    return service.run_experiment(cfg, os.path.join(directory, preset))


@unittest.skipUnless(os.getenv("STATCTRL_SLOW_TESTS"), "set STATCTRL_SLOW_TESTS=1 to run the reduced preset regimes")
class TestPresetRegimes(unittest.TestCase):

    def setUp(self):
        """Set up test environment for each test."""
        self.service = ExperimentService()
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_triad_regime1_all_strategies(self):
        """Test that every strategy beats natural decay and high order with closure tracks best."""
        result = preset_run(
            self.service, self.tmp.name, "triad-regime1",
            strategy="all",
            protocol={"T_spin": 20.0, "T_pert": 10.0},
            kernels={"T_sample": 600.0, "n_chains": 20, "burn_in": 10.0},
            ensemble={"size": 2000},
        )
        runs = result.comparison["runs"]
        strategies = ("low-lr", "low-closure", "high-lr", "high-closure")
        for label in strategies:
            with self.subTest(strategy=label):
                self.assertLess(runs[label]["terminal_ratio"], 0.2)
                self.assertLess(runs[label]["tracking_error"], runs[UNCONTROLLED]["tracking_error"])
        best = min(strategies, key=lambda label: runs[label]["tracking_error"])
        self.assertEqual(best, "high-closure")

    def test_lorenz96_high_closure_halves_tracking_error(self):
        """Test the Lorenz '96 F = 8 to F = 5 control against natural decay."""
        result = preset_run(
            self.service, self.tmp.name, "lorenz96-5to8",
            protocol={"T_spin": 20.0, "T_pert": 10.0},
            kernels={"T_sample": 1200.0, "n_chains": 20, "burn_in": 10.0},
            ensemble={"size": 1000},
        )
        runs = result.comparison["runs"]
        self.assertLessEqual(runs["high-closure"]["tracking_error"], 0.5 * runs[UNCONTROLLED]["tracking_error"])
        kappa = result.forcings["high-closure"].kappa
        self.assertLessEqual(float(np.max(np.ptp(kappa, axis=1))), 1e-10)

    def test_triad_alt_eq_flags_alternate_equilibrium(self):
        """Test that the high-order forcing does not vanish while the energy still converges."""
        result = preset_run(
            self.service, self.tmp.name, "triad-alt-eq",
            protocol={"T_spin": 20.0, "T_pert": 10.0},
            kernels={"T_sample": 600.0, "n_chains": 20, "burn_in": 10.0},
            ensemble={"size": 2000},
        )
        forcing = result.forcings["high-closure"]
        self.assertTrue(forcing.diagnostics.alternate_equilibrium)
        self.assertGreater(forcing.diagnostics.terminal_kappa_norm, 1e-2 * forcing.diagnostics.max_kappa_norm)
        run = result.comparison["runs"]["high-closure"]
        self.assertTrue(run["alternate_equilibrium"])
        self.assertLess(run["terminal_ratio"], 0.2)


if __name__ == '__main__':
    unittest.main()
