"""Repository module."""
from .kernel_repo import KernelRepository  # type: ignore
from .manifest_repo import ManifestRepository  # type: ignore
from .series_repo import SeriesRepository  # type: ignore

__all__ = [
    "KernelRepository",
    "ManifestRepository",
    "SeriesRepository"
]
