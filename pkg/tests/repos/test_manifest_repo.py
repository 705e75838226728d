import json
import os
import tempfile
import unittest
from importlib import metadata
from unittest.mock import patch

import numpy as np

from turbulence_energy_control.repos.manifest_repo import FAILED_MARKER, MANIFEST_FILE, ManifestRepository


class TestManifestRepository(unittest.TestCase):

    def setUp(self):
        """Set up test environment for each test."""
        self.repo = ManifestRepository()
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = os.path.join(self.tmp.name, "run")

    def test_write_json_converts_numpy(self):
        """Test that numpy arrays and scalars are written as plain JSON."""
        self.repo.write_json(self.dir, "equilibrium.json", {"mean": np.array([1.0, 2.0]), "energy": np.float64(0.5)})
        document = self.repo.read_json(self.dir, "equilibrium.json")
        self.assertEqual(document, {"energy": 0.5, "mean": [1.0, 2.0]})

    def test_write_json_rejects_unknown_types(self):
        """Test that non-serializable values raise TypeError."""
        with self.assertRaises(TypeError):
            self.repo.write_json(self.dir, "bad.json", {"value": object()})

    def test_write_manifest(self):
        """Test the manifest fields and extra entries."""
        stages = {"system": {"Status": "completed"}}
        self.repo.write_manifest(self.dir, {"preset": "triad-regime1"}, 42, stages, {"failed": False})
        with open(os.path.join(self.dir, MANIFEST_FILE)) as f:
            manifest = json.load(f)
        self.assertEqual(manifest["seed"], 42)
        self.assertEqual(manifest["config"], {"preset": "triad-regime1"})
        self.assertEqual(manifest["stages"], stages)
        self.assertFalse(manifest["failed"])
        self.assertIn("numpy", manifest["versions"])
        self.assertIn("written_at", manifest)

    @patch('turbulence_energy_control.repos.manifest_repo.metadata.version')
    def test_package_versions_missing_package(self, mock_version):
        """Test that an uninstalled package is reported as None."""
        mock_version.side_effect = metadata.PackageNotFoundError("turbulence-energy-control")
        versions = self.repo.package_versions()
        self.assertTrue(all(v is None for v in versions.values()))

    def test_failed_marker_round_trip(self):
        """Test writing and clearing the FAILED marker."""
        path = self.repo.write_failed_marker(self.dir, "inversion", "singular denominator")
        with open(path) as f:
            self.assertEqual(f.read(), "stage: inversion\nerror: singular denominator\n")
        self.repo.clear_failed_marker(self.dir)
        self.assertFalse(os.path.exists(os.path.join(self.dir, FAILED_MARKER)))

    def test_clear_missing_marker(self):
        """Test that clearing without a marker is a no-op."""
        self.repo.clear_failed_marker(self.tmp.name)
        self.assertFalse(os.path.exists(os.path.join(self.tmp.name, FAILED_MARKER)))


if __name__ == '__main__':
    unittest.main()
