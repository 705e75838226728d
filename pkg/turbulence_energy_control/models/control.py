"""Scalar optimal energy control problem and its solution."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Drive the energy perturbation E (dE/dt = -2dE + sum_k C_k) to zero on [0, T]."""
    d: float
    alpha: np.ndarray
    k_T: float
    T: float
    dt: float
    E0: float
    active_modes: tuple[int, ...] | None = None  # zero-based; None means all

    def __post_init__(self) -> None:
        alpha = np.array(self.alpha, dtype=float).ravel()
        object.__setattr__(self, "alpha", alpha)
        if self.d <= 0:
            raise ValueError(f"Damping d must be positive, got {self.d}")
        if np.any(alpha <= 0):
            raise ValueError(f"Control weights must be positive, got {alpha}")
        if self.k_T < 0:
            raise ValueError(f"Terminal cost k_T must be non-negative, got {self.k_T}")
        if self.T <= 0 or self.dt <= 0:
            raise ValueError(f"Horizon and step must be positive, got T={self.T}, dt={self.dt}")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"Control step {self.dt} does not divide horizon {self.T}")
        if self.active_modes is not None:
            modes = tuple(sorted(set(int(k) for k in self.active_modes)))
            if not modes or modes[0] < 0 or modes[-1] >= alpha.size:
                raise ValueError(f"Active modes {self.active_modes} out of range for {alpha.size} modes")
            object.__setattr__(self, "active_modes", modes)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def dim(self) -> int:
        return int(self.alpha.size)

    @property
    def active_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        if self.active_modes is None:
            mask[:] = True
        else:
            mask[list(self.active_modes)] = True
        return mask

    @property
    def control_gain(self) -> float:
        """a = sum of 1/alpha_k over active modes."""
        return float(np.sum(1.0 / self.alpha[self.active_mask]))

    @property
    def grid(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True, eq=False)
class ControlSolution:
    """K, E*, C_k and dC_k/dt on the control grid."""
    times: np.ndarray
    K: np.ndarray
    E_star: np.ndarray
    C: np.ndarray  # (n_t, N)
    dC: np.ndarray  # (n_t, N)
    problem: ControlProblem | None = None

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def dim(self) -> int:
        return int(self.C.shape[1])
