"""Linear response kernels on a uniform lag grid."""
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class KernelProvenance:
    """Where a kernel came from."""
    seed: int
    t_sample: float
    dtau: float
    tau_max: float
    n_samples: int
    system_hash: str


@dataclass(frozen=True, eq=False)
class MeanResponseKernel:
    """values[m, k, l] = R_u,kl(m * dtau)."""
    dtau: float
    values: np.ndarray
    provenance: KernelProvenance
    stderr: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n_lags(self) -> int:
        return int(self.values.shape[0])

    @property
    def tau_max(self) -> float:
        return self.dtau * (self.n_lags - 1)

    @property
    def lags(self) -> np.ndarray:
        return self.dtau * np.arange(self.n_lags)

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True, eq=False)
class CovResponseKernel:
    """values[m, i, j, l] = R_R,ijl(m * dtau), symmetric in (i, j)."""
    dtau: float
    values: np.ndarray
    provenance: KernelProvenance
    stderr: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n_lags(self) -> int:
        return int(self.values.shape[0])

    @property
    def tau_max(self) -> float:
        return self.dtau * (self.n_lags - 1)

    @property
    def lags(self) -> np.ndarray:
        return self.dtau * np.arange(self.n_lags)

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True, eq=False)
class KernelEstimate:
    """Output of one kernel estimation run."""
    mean_eq: np.ndarray
    cov_eq: np.ndarray
    mean_kernel: MeanResponseKernel | None
    cov_kernel: CovResponseKernel | None
    acf: np.ndarray | None = None  # (n_lags, N) normalized autocorrelation
    decorrelation_time: np.ndarray | None = None
