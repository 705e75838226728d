"""Repository for run manifests and JSON reports"""
import json
import logging
import os
from datetime import datetime, timezone

UTC = timezone.utc
from importlib import metadata
from typing import Any

import numpy as np

FAILED_MARKER = "FAILED"
MANIFEST_FILE = "manifest.json"
EQUILIBRIUM_FILE = "equilibrium.json"
COMPARISON_FILE = "comparison.json"
TRACKED_PACKAGES = ("turbulence-energy-control", "numpy", "scipy", "pandas")


def _to_builtin(value: Any) -> Any:
    """json.dump hook for numpy scalars and arrays."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


# noinspection PyMethodMayBeStatic
class ManifestRepository:
    """Repository for manifest.json, equilibrium.json, comparison.json and the FAILED marker"""

    def write_json(self, directory: str, name: str, payload: dict[str, Any]) -> str:
        """Write a JSON document with sorted keys

        Args:
            directory (str): Output directory, created if missing
            name (str): File name
            payload (dict[str, Any]): Document; numpy values are converted

        Returns:
            str: Path written
        """
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, name)
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=_to_builtin)
            f.write("\n")
        logging.debug(f"ManifestRepository.write_json: wrote {path}")
        return path

    def read_json(self, directory: str, name: str) -> dict[str, Any]:
        with open(os.path.join(directory, name)) as f:
            return json.load(f)

    def package_versions(self) -> dict[str, str | None]:
        """Installed versions of the packages that determine the numbers in a run"""
        versions: dict[str, str | None] = {}
        for package in TRACKED_PACKAGES:
            try:
                versions[package] = metadata.version(package)
            except metadata.PackageNotFoundError:
                versions[package] = None  # running from a source checkout
        return versions

    def write_manifest(
            self,
            directory: str,
            config_document: dict[str, Any],
            seed: int,
            stages: dict[str, Any],
            extra: dict[str, Any] | None = None,
    ) -> str:
        """Write manifest.json for a run

        Args:
            directory (str): Run directory
            config_document (dict[str, Any]): Resolved configuration echo
            seed (int): Master seed
            stages (dict[str, Any]): Stage status and wall times from MonitoringService
            extra (dict[str, Any] | None): Additional entries such as output files

        Returns:
            str: Path written
        """
        manifest = {
            "seed": seed,
            "config": config_document,
            "versions": self.package_versions(),
            "stages": stages,
            "written_at": datetime.now(UTC).isoformat(),
        }
        manifest.update(extra or {})
        return self.write_json(directory, MANIFEST_FILE, manifest)

    def write_failed_marker(self, directory: str, stage: str, error: str) -> str:
        """Write the FAILED marker naming the stage and error; earlier outputs stay in place"""
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, FAILED_MARKER)
        with open(path, "w") as f:
            f.write(f"stage: {stage}\nerror: {error}\n")
        logging.error(f"ManifestRepository.write_failed_marker: stage {stage} failed, marker at {path}")
        return path

    def clear_failed_marker(self, directory: str) -> None:
        """Remove a stale marker left by an earlier failed run into the same directory"""
        path = os.path.join(directory, FAILED_MARKER)
        if os.path.exists(path):
            os.remove(path)
