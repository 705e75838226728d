"""
Unit tests for the command-line application.
Tests argument handling and the mapping of failures onto exit codes.
"""
import io
import json
import os
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from unittest.mock import MagicMock, patch

from control_app import main
from turbulence_energy_control.commands.base import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION
from turbulence_energy_control.utils import StageError


class TestControlApp(unittest.TestCase):
    """Test cases for the statctrl entry point."""

    def setUp(self):
        """Set up test environment for each test."""
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write_config(self, document):
        path = os.path.join(self.tmp.name, "experiment.json")
        with open(path, "w") as f:
            if isinstance(document, str):
                f.write(document)
            else:
                json.dump(document, f)
        return path

    def test_validate_preset(self):
        """Test that a valid preset exits 0."""
        with redirect_stdout(io.StringIO()) as out:
            code = main(["validate", "--preset", "triad-regime1"])
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(json.loads(out.getvalue())["passed"])

    def test_validate_nonpositive_alpha(self):
        """Test that alpha = -1 exits 1 and names the reason."""
        path = self.write_config({"preset": "triad-regime1", "control": {"alpha": -1}})
        with redirect_stdout(io.StringIO()) as out:
            code = main(["validate", path])
        self.assertEqual(code, EXIT_VALIDATION)
        self.assertIn("nonpositive control weight", out.getvalue())

    def test_invalid_json(self):
        """Test that a syntax error in the configuration exits 1 with its location."""
        path = self.write_config('{"preset": "triad-regime1",}')
        with self.assertLogs(level="ERROR") as logs:
            code = main(["validate", path])
        self.assertEqual(code, EXIT_VALIDATION)
        self.assertTrue(any("line 1" in line for line in logs.output))

    def test_unknown_command(self):
        """Test that an unknown subcommand exits 1."""
        with redirect_stderr(io.StringIO()):
            self.assertEqual(main(["simulate"]), EXIT_VALIDATION)

    def test_missing_required_argument(self):
        """Test that invert without --strategy exits 1."""
        path = self.write_config({"preset": "triad-regime1"})
        with redirect_stderr(io.StringIO()):
            self.assertEqual(main(["invert", path, "--out", self.tmp.name]), EXIT_VALIDATION)

    def test_help(self):
        """Test that --help exits 0."""
        with redirect_stdout(io.StringIO()):
            self.assertEqual(main(["--help"]), EXIT_OK)

    def test_control_rejects_invalid_config(self):
        """Test that a run command refuses an invalid configuration with exit 1."""
        path = self.write_config({"preset": "triad-regime1", "ensemble": {"size": 1}})
        with self.assertLogs(level="ERROR") as logs:
            code = main(["control", path, "--out", self.tmp.name])
        self.assertEqual(code, EXIT_VALIDATION)
        self.assertTrue(any("ensemble size must be at least 2" in line for line in logs.output))

    @patch('turbulence_energy_control.commands.cmd_run.ExperimentService')
    def test_runtime_failure(self, mock_experiment_service_class):
        """Test that a failing stage exits 2."""
        mock_experiment_service = MagicMock()
        mock_experiment_service.validate_config.return_value.passed = True
        mock_experiment_service.parse.return_value.output_dir = None
        mock_experiment_service.run_experiment.side_effect = StageError("spin_up", FloatingPointError("blow-up"))
        mock_experiment_service_class.return_value = mock_experiment_service

        with self.assertLogs(level="ERROR"):
            code = main(["run", "--preset", "triad-regime1", "--out", self.tmp.name])
        self.assertEqual(code, EXIT_RUNTIME)


if __name__ == '__main__':
    unittest.main()
