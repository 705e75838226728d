"""Data model for a quadratic energy-conserving system."""
import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


def _frozen(array: np.ndarray) -> np.ndarray:
    """Return a read-only float copy of array."""
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class QuadraticSystem:
    """du/dt = (L + D)u + B(u, u) + F + sigma dW in the standard basis.

    The bilinear operator is a sparse list of entries (i, j, k, b) with
    B(u, v)_i = sum_jk b_ijk u_j v_k, stored as parallel arrays.
    """
    dim: int
    skew: np.ndarray
    damping: np.ndarray
    bilinear_index: np.ndarray  # (nnz, 3) integer rows (i, j, k)
    bilinear_coef: np.ndarray  # (nnz,)
    forcing_eq: np.ndarray
    noise: np.ndarray
    uniform_damping: float | None = None
    translation_invariant: bool = False
    name: str = "system"
    _scatter: sparse.csr_array = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        index = np.array(self.bilinear_index, dtype=np.int64, copy=True).reshape(-1, 3)
        index.setflags(write=False)
        object.__setattr__(self, "bilinear_index", index)
        for name in ("skew", "damping", "bilinear_coef", "forcing_eq", "noise"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        nnz = index.shape[0]
        scatter = sparse.csr_array(
            (np.ones(nnz), (np.arange(nnz), index[:, 0])), shape=(nnz, self.dim)
        )
        object.__setattr__(self, "_scatter", scatter)

    @property
    def linear_operator(self) -> np.ndarray:
        """L + D"""
        return self.skew + self.damping

    @property
    def scatter(self) -> sparse.csr_array:
        """(nnz, N) 0/1 matrix sending each tensor entry to its output row i."""
        return self._scatter

    def dense_tensor(self) -> np.ndarray:
        """Full (N, N, N) array b[i, j, k]; repeated entries are summed."""
        tensor = np.zeros((self.dim, self.dim, self.dim))
        i, j, k = self.bilinear_index.T
        np.add.at(tensor, (i, j, k), self.bilinear_coef)
        return tensor

    @property
    def noise_trace(self) -> float:
        """tr(Q_sigma) for diagonal noise."""
        return float(np.sum(self.noise ** 2))

    def fingerprint(self) -> str:
        """Stable hash of every operator, used to match kernels to the system they came from."""
        digest = hashlib.sha256()
        digest.update(str(self.dim).encode())
        for array in (self.skew, self.damping, self.bilinear_index, self.bilinear_coef, self.forcing_eq, self.noise):
            digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()[:16]
