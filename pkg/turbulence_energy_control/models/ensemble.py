"""Monte Carlo ensemble of model states."""
import copy
from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class Ensemble:
    """M x N sample block with one random stream per fixed-size chunk of samples."""
    samples: np.ndarray
    time: float
    streams: list[np.random.Generator]
    chunk_size: int

    def __post_init__(self) -> None:
        if self.samples.ndim != 2 or self.samples.shape[0] < 2:
            raise ValueError(f"Ensemble needs an (M, N) block with M >= 2, got shape {self.samples.shape}")
        expected = -(-self.size // self.chunk_size)
        if len(self.streams) != expected:
            raise ValueError(f"Ensemble with {self.size} samples needs {expected} streams, got {len(self.streams)}")

    @property
    def size(self) -> int:
        return int(self.samples.shape[0])

    @property
    def dim(self) -> int:
        return int(self.samples.shape[1])

    def chunk_slices(self) -> list[slice]:
        return [slice(start, min(start + self.chunk_size, self.size))
                for start in range(0, self.size, self.chunk_size)]

    def copy(self) -> "Ensemble":
        """Independent copy, including the exact state of every random stream."""
        return Ensemble(
            samples=self.samples.copy(),
            time=self.time,
            streams=copy.deepcopy(self.streams),
            chunk_size=self.chunk_size,
        )
