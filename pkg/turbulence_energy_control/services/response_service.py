"""Service for quasi-Gaussian response kernels and their convolution machinery."""
import logging
from dataclasses import replace
from typing import Callable, TypeVar

import numpy as np
from scipy import integrate, linalg

from turbulence_energy_control.models.kernels import (
    CovResponseKernel,
    KernelEstimate,
    KernelProvenance,
    MeanResponseKernel,
)
from turbulence_energy_control.models.quadratic_system import QuadraticSystem
from turbulence_energy_control.services.ensemble_service import EnsembleService
from turbulence_energy_control.utils import KERNEL_STREAM, parallel_map

MAX_CONDITION = 1e12
COVERAGE_FRACTION = 0.01
N_BATCHES = 20
KERNEL_CHOICES = ("mean", "covariance", "both")

K = TypeVar("K", MeanResponseKernel, CovResponseKernel)


class KernelEstimationError(ValueError):
    """Equilibrium sample is unusable for kernel estimation."""


def _grid_count(value: float, step: float, what: str) -> int:
    ratio = value / step
    count = int(round(ratio))
    if count < 1 or abs(ratio - count) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"{what} ({value}) must be a positive multiple of {step}")
    return count


def circulant_vector(vector: np.ndarray) -> np.ndarray:
    """Projection of a vector onto translation-invariant (constant) form."""
    return np.full_like(np.asarray(vector, dtype=float), float(np.mean(vector)))


def circulant_matrix(values: np.ndarray) -> np.ndarray:
    """Average (..., N, N) over index rotations so entry [k, l] depends only on (k - l) mod N."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    idx = np.arange(n)
    by_offset = np.stack([values[..., (idx + o) % n, idx].mean(axis=-1) for o in range(n)], axis=-1)
    return by_offset[..., (idx[:, None] - idx[None, :]) % n]


def circulant_tensor(values: np.ndarray) -> np.ndarray:
    """Average (n_lag, N, N, N) over simultaneous rotations of all three mode indices."""
    n = values.shape[-1]
    out = np.zeros_like(values)
    for r in range(n):
        out += np.roll(values, shift=(-r, -r, -r), axis=(1, 2, 3))
    return out / n


def _interp_lag(values: np.ndarray, dtau: float, tau: np.ndarray) -> np.ndarray:
    """Kernel at lags tau by linear interpolation; zero beyond the last lag."""
    n_lag = values.shape[0]
    pos = np.clip(np.asarray(tau, dtype=float) / dtau, 0.0, None)
    inside = pos <= (n_lag - 1) * (1.0 + 1e-12)
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, n_lag - 2)
    w = np.clip(pos - i0, 0.0, 1.0)
    shape = (-1,) + (1,) * (values.ndim - 1)
    out = (1.0 - w).reshape(shape) * values[i0] + w.reshape(shape) * values[i0 + 1]
    return np.where(inside.reshape(shape), out, 0.0)


def _interp_signal(signal: np.ndarray, h: float, s: np.ndarray) -> np.ndarray:
    n_t = signal.shape[0]
    if n_t == 1:
        return np.broadcast_to(signal[0], (s.size,) + signal.shape[1:])
    pos = np.clip(s / h, 0.0, n_t - 1)
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, n_t - 2)
    w = (pos - i0).reshape((-1,) + (1,) * (signal.ndim - 1))
    return (1.0 - w) * signal[i0] + w * signal[i0 + 1]


def _contract(values: np.ndarray, vector: np.ndarray | float) -> np.ndarray | float:
    if np.ndim(vector) == 0:
        return values * vector
    return values @ np.asarray(vector, dtype=float)


class ResponseService:
    """FDT kernel estimation plus history, tail and derivative operators on kernels."""

    def __init__(self, ensemble_service: EnsembleService | None = None, max_workers: int | None = None) -> None:
        self.ensemble_service = ensemble_service or EnsembleService(max_workers=max_workers)
        self.max_workers = max_workers

    def estimate_kernels(
            self,
            system: QuadraticSystem,
            T_sample: float,
            dtau: float,
            tau_max: float,
            seed: int,
            which: str = "both",
            dt: float = 1e-3,
            n_chains: int = 100,
            burn_in: float = 20.0,
            cov_max_starts: int | None = None,
            truncate_modes: tuple[int, ...] | None = None,
            chunk_size: int | None = None,
    ) -> KernelEstimate:
        """Estimate R_u(tau) and R_R(tau) from equilibrated chains with the Gaussian score.

        The score is G(u) = R_eq^-1 (u - u_eq). Each chain is sampled every dtau and all
        overlapping windows are averaged; standard errors come from batch means over
        groups of chains.

        Args:
            system (QuadraticSystem): Dynamics
            T_sample (float): Total sampled time summed over chains
            dtau (float): Lag step, a multiple of dt
            tau_max (float): Largest lag, a multiple of dtau
            seed (int): Seed of the kernel chains
            which (str): "mean", "covariance" or "both"
            dt (float): Integration step
            n_chains (int): Number of independent chains
            burn_in (float): Time discarded from every chain
            cov_max_starts (int | None): Cap on window starts per chain for the covariance kernel
            truncate_modes (tuple[int, ...] | None): Zero-based forcing columns kept; others are zeroed
            chunk_size (int | None): Chains per random stream

        Returns:
            KernelEstimate: Equilibrium moments, kernels and autocorrelation diagnostics
        """
        if which not in KERNEL_CHOICES:
            raise ValueError(f"which must be one of {KERNEL_CHOICES}, got '{which}'")
        if n_chains < 2:
            raise ValueError("Kernel estimation needs at least two chains")
        every = _grid_count(dtau, dt, "Lag step")
        n_lags = _grid_count(tau_max, dtau, "Largest lag") + 1
        n_records = int(np.floor(T_sample / n_chains / dtau + 1e-9)) + 1
        if n_records < 2 * n_lags:
            raise KernelEstimationError(
                f"Each chain covers {(n_records - 1) * dtau:g} time units but needs at least {2 * (n_lags - 1) * dtau:g}; "
                f"increase T_sample or reduce n_chains"
            )

        logging.info(
            f"ResponseService.estimate_kernels: {n_chains} chains x {n_records} records, {n_lags} lags, which={which}"
        )
        ens = self.ensemble_service.cold_start(system, n_chains, seed, chunk_size, tag=KERNEL_STREAM)
        n_burn = int(round(burn_in / dt))
        if n_burn > 0:
            self.ensemble_service.integrate(system, ens, system.forcing_eq, n_burn * dt, dt)
        path = self.ensemble_service.record_trajectory(system, ens, system.forcing_eq, n_records, every, dt)

        dim = system.dim
        flat = path.reshape(-1, dim)
        mean_eq = flat.mean(axis=0)
        cov_eq = np.atleast_2d(np.cov(flat, rowvar=False, bias=True))
        if system.translation_invariant:
            mean_eq = circulant_vector(mean_eq)
            cov_eq = circulant_matrix(cov_eq)
        condition = float(np.linalg.cond(cov_eq))
        if not np.isfinite(condition) or condition > MAX_CONDITION:
            raise KernelEstimationError(
                f"Equilibrium covariance is numerically singular (condition number {condition:.3e}); "
                f"sample longer or add noise to the degenerate modes"
            )
        precision = linalg.inv(cov_eq)
        precision = 0.5 * (precision + precision.T)
        fluct = path - mean_eq
        score = fluct @ precision

        n_starts = n_records - n_lags + 1
        bounds = np.array_split(np.arange(n_chains), min(N_BATCHES, n_chains))
        groups = [slice(int(b[0]), int(b[-1]) + 1) for b in bounds]
        weights = np.array([g.stop - g.start for g in groups], dtype=float) / n_chains

        def batch(per_group: Callable[[slice], np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
            """Weighted mean over chain groups and the batch-means standard error."""
            total = None
            raw_sum = None
            raw_sq = None
            for g, w in zip(groups, weights):
                value = per_group(g)
                total = w * value if total is None else total + w * value
                raw_sum = value.copy() if raw_sum is None else raw_sum + value
                raw_sq = value * value if raw_sq is None else raw_sq + value * value
            n_g = len(groups)
            var = np.clip((raw_sq - raw_sum * raw_sum / n_g) / (n_g - 1), 0.0, None)
            return total, np.sqrt(var / n_g)

        def mean_lag(m: int) -> tuple[np.ndarray, np.ndarray]:
            def per_group(g: slice) -> np.ndarray:
                a = fluct[m:m + n_starts, g].reshape(-1, dim)
                b = score[:n_starts, g].reshape(-1, dim)
                return a.T @ b / a.shape[0]
            return batch(per_group)

        def acf_lag(m: int) -> np.ndarray:
            return np.mean(fluct[m:m + n_starts] * fluct[:n_starts], axis=(0, 1))

        acf_raw = np.stack(parallel_map(acf_lag, range(n_lags), self.max_workers))
        acf = acf_raw / acf_raw[0]
        decorrelation_time = integrate.trapezoid(acf, dx=dtau, axis=0)

        provenance = KernelProvenance(
            seed=seed,
            t_sample=float(T_sample),
            dtau=float(dtau),
            tau_max=float(tau_max),
            n_samples=int(n_chains * n_records),
            system_hash=system.fingerprint(),
        )
        keep = None
        if truncate_modes is not None:
            keep = np.zeros(dim, dtype=bool)
            keep[list(truncate_modes)] = True

        mean_kernel = None
        if which in ("mean", "both"):
            pairs = parallel_map(mean_lag, range(n_lags), self.max_workers)
            values = np.stack([p[0] for p in pairs])
            stderr = np.stack([p[1] for p in pairs])
            if keep is not None:
                values[..., ~keep] = 0.0
                stderr[..., ~keep] = 0.0
            if system.translation_invariant:
                values = circulant_matrix(values)
                stderr = circulant_matrix(stderr)
            mean_kernel = MeanResponseKernel(dtau=float(dtau), values=values, provenance=provenance, stderr=stderr)
            mean_kernel.warnings.extend(self._coverage_warnings("mean", values, stderr))
            mean_kernel.warnings.extend(self._acf_warnings(acf))

        cov_kernel = None
        if which in ("covariance", "both"):
            stride = 1 if not cov_max_starts else max(1, -(-n_starts // int(cov_max_starts)))
            starts = np.arange(0, n_starts, stride)

            def cov_lag(m: int) -> tuple[np.ndarray, np.ndarray]:
                def per_group(g: slice) -> np.ndarray:
                    x = fluct[starts + m, g].reshape(-1, dim)
                    prod = (x[:, :, None] * x[:, None, :] - cov_eq).reshape(x.shape[0], dim * dim)
                    b = score[starts, g].reshape(-1, dim)
                    return (prod.T @ b / x.shape[0]).reshape(dim, dim, dim)
                value, err = batch(per_group)
                return 0.5 * (value + value.transpose(1, 0, 2)), 0.5 * (err + err.transpose(1, 0, 2))

            pairs = parallel_map(cov_lag, range(n_lags), self.max_workers)
            values = np.stack([p[0] for p in pairs])
            stderr = np.stack([p[1] for p in pairs])
            del pairs
            if keep is not None:
                values[..., ~keep] = 0.0
                stderr[..., ~keep] = 0.0
            if system.translation_invariant:
                values = circulant_tensor(values)
                stderr = circulant_tensor(stderr)
            cov_kernel = CovResponseKernel(dtau=float(dtau), values=values, provenance=provenance, stderr=stderr)
            cov_kernel.warnings.extend(self._coverage_warnings("covariance", values, stderr))

        return KernelEstimate(
            mean_eq=mean_eq,
            cov_eq=cov_eq,
            mean_kernel=mean_kernel,
            cov_kernel=cov_kernel,
            acf=acf,
            decorrelation_time=decorrelation_time,
        )

    def _coverage_warnings(self, label: str, values: np.ndarray, stderr: np.ndarray | None) -> list[str]:
        """Warn when the kernel has not decayed by the last lag."""
        head = float(np.max(np.abs(values[0])))
        tail = np.abs(values[-1])
        noise = 3.0 * stderr[-1] if stderr is not None else 0.0
        excess = tail - np.maximum(COVERAGE_FRACTION * head, noise)
        if head > 0 and np.any(excess > 0):
            message = (
                f"{label} kernel has not decayed by tau_max: max |R(tau_max)| = {float(np.max(tail)):.3g} "
                f"vs |R(0)| = {head:.3g}; response beyond tau_max is truncated"
            )
            logging.warning(f"ResponseService: {message}")
            return [message]
        return []

    def _acf_warnings(self, acf: np.ndarray) -> list[str]:
        tail = np.abs(acf[-1])
        if np.any(tail > COVERAGE_FRACTION):
            modes = [int(k) + 1 for k in np.flatnonzero(tail > COVERAGE_FRACTION)]
            message = f"autocorrelation of modes {modes} exceeds {COVERAGE_FRACTION} at tau_max"
            logging.warning(f"ResponseService: {message}")
            return [message]
        return []

    def convolve(
            self, kernel: np.ndarray, dtau: float, signal: np.ndarray, h: float, t: float
    ) -> np.ndarray | float:
        """History integral int_0^t R(t - s) kappa(s) ds by the trapezoid rule.

        Kernel and signal are linearly interpolated onto a quadrature grid no coarser
        than either of their grids; the kernel is zero beyond its last lag.

        Args:
            kernel (np.ndarray): (n_lag,) scalar kernel or (n_lag, ..., L) kernel block
            dtau (float): Lag step
            signal (np.ndarray): (n_t,) or (n_t, L) samples on the grid 0, h, 2h, ...
            h (float): Signal step
            t (float): Upper limit

        Returns:
            np.ndarray | float: Integral, contracted over the forcing index L
        """
        kernel = np.asarray(kernel, dtype=float)
        signal = np.asarray(signal, dtype=float)
        if kernel.shape[0] < 2:
            raise ValueError("convolve needs a kernel with at least two lags")
        horizon = (signal.shape[0] - 1) * h
        if t < 0 or t > horizon * (1.0 + 1e-12) + 1e-12:
            raise ValueError(f"convolve: t = {t} outside the signal grid [0, {horizon}]")
        out_shape = kernel.shape[1:-1] if signal.ndim > 1 else kernel.shape[1:]
        if t == 0:
            return np.zeros(out_shape) if out_shape else 0.0
        step = min(h, dtau)
        n_q = max(1, int(np.ceil(t / step - 1e-9)))
        s = np.linspace(0.0, t, n_q + 1)
        k_vals = _interp_lag(kernel, dtau, t - s)
        x_vals = _interp_signal(signal, h, s)
        if signal.ndim == 1:
            integrand = k_vals * x_vals.reshape((-1,) + (1,) * (k_vals.ndim - 1))
        else:
            integrand = np.einsum("q...l,ql->q...", k_vals, x_vals)
        result = integrate.trapezoid(integrand, s, axis=0)
        return float(result) if np.ndim(result) == 0 else result

    def tail_integral(
            self, kernel: np.ndarray, dtau: float, forcing_pert: np.ndarray | float, t: float,
            cumulative: np.ndarray | None = None,
    ) -> np.ndarray | float:
        """dF_p times int_t^tau_max R(tau) dtau, the response at t >= 0 to the constant pre-forcing.

        Args:
            kernel (np.ndarray): (n_lag,) or (n_lag, ..., L) kernel
            dtau (float): Lag step
            forcing_pert (np.ndarray | float): Scalar or (L,) pre-forcing perturbation
            t (float): Time since the pre-forcing was switched off
            cumulative (np.ndarray | None): Precomputed cumulative trapezoid of the kernel

        Returns:
            np.ndarray | float: Tail response
        """
        kernel = np.asarray(kernel, dtype=float)
        if t < 0:
            raise ValueError(f"tail_integral: t must be non-negative, got {t}")
        if cumulative is None:
            cumulative = integrate.cumulative_trapezoid(kernel, dx=dtau, axis=0, initial=0)
        n_lag = kernel.shape[0]
        tau_max = (n_lag - 1) * dtau
        if t >= tau_max:
            tail = np.zeros(kernel.shape[1:])
        else:
            i0 = min(int(np.floor(t / dtau)), n_lag - 2)
            at_t = _interp_lag(kernel, dtau, np.array([t]))[0]
            partial = cumulative[i0] + (t - i0 * dtau) * 0.5 * (kernel[i0] + at_t)
            tail = cumulative[-1] - partial
        result = _contract(tail, forcing_pert)
        return float(result) if np.ndim(result) == 0 else result

    def kernel_time_derivative(self, kernel: K) -> K:
        """dR/dtau by centered differences, second-order one-sided at both ends."""
        if kernel.n_lags < 3:
            raise ValueError("kernel_time_derivative needs at least three lags")
        values = np.gradient(kernel.values, kernel.dtau, axis=0, edge_order=2)
        return replace(kernel, values=values, stderr=None, warnings=list(kernel.warnings))

    def lag_derivative(self, values: np.ndarray, dtau: float) -> np.ndarray:
        """Same as kernel_time_derivative for a raw lag array."""
        values = np.asarray(values, dtype=float)
        if values.shape[0] < 3:
            raise ValueError("lag_derivative needs at least three lags")
        return np.gradient(values, dtau, axis=0, edge_order=2)

    def kernel_at(self, values: np.ndarray, dtau: float, t: float) -> np.ndarray:
        """Kernel value at lag t, zero beyond the last lag."""
        return _interp_lag(np.asarray(values, dtype=float), dtau, np.array([t]))[0]
