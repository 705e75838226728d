"""Moment statistics of an ensemble."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class MomentSnapshot:
    """Mean, unbiased covariance and statistical energy at one instant."""
    mean: np.ndarray
    cov: np.ndarray
    energy: float
    energy_pert: float
    energy_stderr: float = 0.0


@dataclass(frozen=True, eq=False)
class EquilibriumStats:
    """Statistics of the unperturbed equilibrium ensemble."""
    mean: np.ndarray
    cov: np.ndarray
    energy: float
    energy_stderr: float
    energy_theory: float | None = None

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


@dataclass(frozen=True, eq=False)
class MomentSeries:
    """Time series of mean, covariance and statistical energy on a uniform output grid."""
    times: np.ndarray
    mean: np.ndarray  # (n_t, N)
    cov: np.ndarray  # (n_t, N, N)
    energy: np.ndarray
    energy_pert: np.ndarray
    energy_stderr: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.mean.shape[1])

    @property
    def variance(self) -> np.ndarray:
        return np.diagonal(self.cov, axis1=1, axis2=2)

    @classmethod
    def from_snapshots(cls, times: np.ndarray, snapshots: list[MomentSnapshot]) -> "MomentSeries":
        return cls(
            times=np.asarray(times, dtype=float),
            mean=np.stack([s.mean for s in snapshots]),
            cov=np.stack([s.cov for s in snapshots]),
            energy=np.array([s.energy for s in snapshots]),
            energy_pert=np.array([s.energy_pert for s in snapshots]),
            energy_stderr=np.array([s.energy_stderr for s in snapshots]),
        )
