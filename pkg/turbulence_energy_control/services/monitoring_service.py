"""Service for tracking pipeline stage progress."""
import logging
import time
from datetime import datetime, timezone

UTC = timezone.utc
from enum import Enum
from typing import Any, Callable, Dict, Optional

from turbulence_energy_control.repos.manifest_repo import ManifestRepository


class StageStatus(Enum):
    """Pipeline stage status."""
    PENDING = "pending"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    FAILED = "failed"


# noinspection PyMethodMayBeStatic
class MonitoringService:
    """Service for tracking stage status and wall times of one run."""

    def __init__(
            self,
            output_dir: Optional[str] = None,
            manifest_repository: Optional[ManifestRepository] = None,
            clock: Callable[[], float] = time.perf_counter,
    ) -> None:
        self.output_dir = output_dir
        self.manifest_repository = manifest_repository or ManifestRepository()
        self.clock = clock
        self.stages: Dict[str, Dict[str, Any]] = {}
        self._started: Dict[str, float] = {}

    def register_stages(self, stages: list[str]) -> None:
        """Mark the planned stages as pending so skipped ones still show up in the manifest."""
        for stage in stages:
            self.stages.setdefault(stage, {"Status": StageStatus.PENDING.value})

    def start_stage(self, stage: str) -> None:
        """Start tracking a stage.

        Args:
            stage: Stage name
        """
        self._started[stage] = self.clock()
        self.stages[stage] = {
            "Status": StageStatus.IN_PROGRESS.value,
            "StartTime": datetime.now(UTC).isoformat(),
        }
        logging.info(f"MonitoringService.start_stage: {stage}")

    def complete_stage(self, stage: str) -> None:
        """Mark a stage as completed and record its wall time.

        Args:
            stage: Stage name
        """
        entity = self.stages.setdefault(stage, {})
        entity["Status"] = StageStatus.COMPLETED.value
        entity["EndTime"] = datetime.now(UTC).isoformat()
        entity["WallSeconds"] = self._elapsed(stage)
        logging.info(f"MonitoringService.complete_stage: {stage} completed in {entity['WallSeconds']:.3f} s")

    def fail_stage(self, stage: str, error: str) -> None:
        """Mark a stage as failed and drop the FAILED marker into the output directory.

        Args:
            stage: Stage name
            error: Error text
        """
        entity = self.stages.setdefault(stage, {})
        entity["Status"] = StageStatus.FAILED.value
        entity["EndTime"] = datetime.now(UTC).isoformat()
        entity["WallSeconds"] = self._elapsed(stage)
        entity["ErrorMessage"] = error
        logging.error(f"MonitoringService.fail_stage: {stage} failed: {error}")
        if self.output_dir is not None:
            try:
                self.manifest_repository.write_failed_marker(self.output_dir, stage, error)
            except OSError as e:
                logging.error(f"MonitoringService.fail_stage: could not write FAILED marker: {e}")

    def _elapsed(self, stage: str) -> float:
        started = self._started.pop(stage, None)
        return 0.0 if started is None else float(self.clock() - started)

    def get_stage_status(self, stage: str) -> Optional[StageStatus]:
        entity = self.stages.get(stage)
        return StageStatus(entity["Status"]) if entity else None

    def get_stage_summary(self) -> Dict[str, Any]:
        """Stage entities for the manifest, in the order stages were first seen."""
        return {stage: dict(entity) for stage, entity in self.stages.items()}

    def has_failures(self) -> bool:
        return any(entity.get("Status") == StageStatus.FAILED.value for entity in self.stages.values())
