"""Service for Monte Carlo ensemble integration and moment statistics."""
import logging
from dataclasses import dataclass

import numpy as np

from turbulence_energy_control.config import CHUNK_SIZE
from turbulence_energy_control.models.ensemble import Ensemble
from turbulence_energy_control.models.moments import EquilibriumStats, MomentSeries, MomentSnapshot
from turbulence_energy_control.models.quadratic_system import QuadraticSystem
from turbulence_energy_control.services.dynamics_service import DynamicsService
from turbulence_energy_control.utils import ENSEMBLE_STREAM, derive_stream, parallel_map

COLD_START_STD = 0.1


class EnsembleBlowUpError(FloatingPointError):
    """A sample left the finite numbers."""

    def __init__(self, sample_index: int, time: float) -> None:
        super().__init__(f"Ensemble sample {sample_index} became non-finite at t = {time:.6g}")
        self.sample_index = sample_index
        self.time = time


@dataclass(frozen=True)
class _ChunkMoments:
    """Count, mean and centered second moment of the columns [u, |u|^2 / 2] of one chunk."""
    n: int
    mean: np.ndarray
    m2: np.ndarray


def _chunk_moments(block: np.ndarray) -> _ChunkMoments:
    augmented = np.concatenate([block, 0.5 * np.sum(block * block, axis=1, keepdims=True)], axis=1)
    mean = augmented.mean(axis=0)
    centered = augmented - mean
    return _ChunkMoments(block.shape[0], mean, centered.T @ centered)


def _merge(a: _ChunkMoments, b: _ChunkMoments) -> _ChunkMoments:
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.n / n)
    m2 = a.m2 + b.m2 + np.outer(delta, delta) * (a.n * b.n / n)
    return _ChunkMoments(n, mean, m2)


def _check_grid_multiple(value: float, step: float, what: str) -> int:
    ratio = value / step
    count = int(round(ratio))
    if count < 1 or abs(ratio - count) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"{what} ({value}) must be a positive multiple of the step ({step})")
    return count


class EnsembleService:
    """Euler-Maruyama ensemble stepping, statistics and the spin-up/perturb/control protocol."""

    def __init__(self, dynamics_service: DynamicsService | None = None, max_workers: int | None = None) -> None:
        self.dynamics_service = dynamics_service or DynamicsService()
        self.max_workers = max_workers

    def cold_start(
            self, system: QuadraticSystem, size: int, seed: int, chunk_size: int | None = None, tag: int = ENSEMBLE_STREAM
    ) -> Ensemble:
        """Zero mean plus N(0, 0.01 I) jitter, one random stream per chunk."""
        chunk = int(chunk_size or CHUNK_SIZE)
        if chunk < 1:
            raise ValueError(f"Chunk size must be positive, got {chunk}")
        n_chunks = -(-size // chunk)
        streams = [derive_stream(seed, tag, c) for c in range(n_chunks)]
        samples = np.empty((size, system.dim))
        for c, stream in enumerate(streams):
            rows = slice(c * chunk, min((c + 1) * chunk, size))
            samples[rows] = COLD_START_STD * stream.standard_normal((rows.stop - rows.start, system.dim))
        return Ensemble(samples=samples, time=0.0, streams=streams, chunk_size=chunk)

    def _em_steps(
            self,
            system: QuadraticSystem,
            u: np.ndarray,
            stream: np.random.Generator,
            forcing: np.ndarray,
            dt: float,
            t0: float,
            first_index: int,
    ) -> None:
        """Euler-Maruyama steps on one chunk view u, in place; forcing[n] acts on step n."""
        noisy = bool(np.any(system.noise != 0.0))
        noise_scale = system.noise * np.sqrt(dt)
        for n in range(forcing.shape[0]):
            u += self.dynamics_service.drift(system, u, forcing[n]) * dt
            if noisy:
                u += noise_scale * stream.standard_normal(u.shape)
            if not np.all(np.isfinite(u)):
                bad = int(np.flatnonzero(~np.all(np.isfinite(u), axis=1))[0])
                raise EnsembleBlowUpError(first_index + bad, t0 + (n + 1) * dt)

    def _advance(self, system: QuadraticSystem, ens: Ensemble, forcing: np.ndarray, dt: float) -> None:
        """Advance ens in place by len(forcing) steps, one pool task per chunk."""
        n_steps = forcing.shape[0]
        if n_steps == 0:
            return
        t0 = ens.time

        def run_chunk(chunk: tuple[slice, np.random.Generator]) -> None:
            rows, stream = chunk
            self._em_steps(system, ens.samples[rows], stream, forcing, dt, t0, rows.start)

        parallel_map(run_chunk, list(zip(ens.chunk_slices(), ens.streams)), self.max_workers)
        ens.time = t0 + n_steps * dt

    def step_ensemble(self, system: QuadraticSystem, ens: Ensemble, forcing_total: np.ndarray, dt: float) -> Ensemble:
        """One Euler-Maruyama step of every sample under the full deterministic forcing.

        Args:
            system (QuadraticSystem): Dynamics
            ens (Ensemble): Current ensemble, left untouched
            forcing_total (np.ndarray): F_eq plus any perturbation at the current time
            dt (float): Step, non-negative

        Returns:
            Ensemble: Advanced ensemble with its own random streams
        """
        if dt < 0:
            raise ValueError(f"EnsembleService.step_ensemble: dt must be non-negative, got {dt}")
        forcing_total = np.asarray(forcing_total, dtype=float)
        if forcing_total.shape != (system.dim,):
            raise ValueError(f"EnsembleService.step_ensemble: forcing must have shape ({system.dim},)")
        out = ens.copy()
        if dt == 0:
            return out
        self._advance(system, out, forcing_total[None, :], dt)
        return out

    def integrate(self, system: QuadraticSystem, ens: Ensemble, forcing: np.ndarray, duration: float, dt: float) -> None:
        """Advance ens in place for `duration` under a constant forcing."""
        if duration <= 0:
            return
        n_steps = _check_grid_multiple(duration, dt, "Integration time")
        block = np.broadcast_to(np.asarray(forcing, dtype=float), (n_steps, system.dim))
        self._advance(system, ens, block, dt)

    def record_trajectory(
            self, system: QuadraticSystem, ens: Ensemble, forcing: np.ndarray, n_records: int, every: int, dt: float
    ) -> np.ndarray:
        """Advance ens in place under constant forcing, storing every `every`-th state.

        Returns:
            np.ndarray: (n_records, M, N) states; record 0 is the starting state
        """
        path = np.empty((n_records, ens.size, ens.dim))
        path[0] = ens.samples
        block = np.broadcast_to(np.asarray(forcing, dtype=float), (every, system.dim))
        t0 = ens.time

        def run_chunk(chunk: tuple[slice, np.random.Generator]) -> None:
            rows, stream = chunk
            u = ens.samples[rows]
            for r in range(1, n_records):
                self._em_steps(system, u, stream, block, dt, t0 + (r - 1) * every * dt, rows.start)
                path[r, rows] = u

        parallel_map(run_chunk, list(zip(ens.chunk_slices(), ens.streams)), self.max_workers)
        ens.time = t0 + (n_records - 1) * every * dt
        return path

    def compute_statistics(self, ens: Ensemble | np.ndarray, energy_eq: float = 0.0) -> MomentSnapshot:
        """Sample mean, unbiased covariance, statistical energy and its perturbation.

        Chunks are reduced in a fixed order, so the result does not depend on thread count.

        Args:
            ens (Ensemble | np.ndarray): Ensemble or raw (M, N) sample block
            energy_eq (float): Equilibrium energy subtracted for E'

        Returns:
            MomentSnapshot: mean, cov, E, E' and the Monte Carlo standard error of E
        """
        if isinstance(ens, Ensemble):
            samples, slices = ens.samples, ens.chunk_slices()
        else:
            samples = np.asarray(ens, dtype=float)
            slices = [slice(s, min(s + CHUNK_SIZE, samples.shape[0])) for s in range(0, samples.shape[0], CHUNK_SIZE)]
        size, dim = samples.shape
        if size < 2:
            raise ValueError("compute_statistics needs at least two samples")

        parts = parallel_map(lambda rows: _chunk_moments(samples[rows]), slices, self.max_workers)
        total = parts[0]
        for part in parts[1:]:
            total = _merge(total, part)

        mean = total.mean[:dim].copy()
        cov = total.m2[:dim, :dim] / (size - 1)
        cov = 0.5 * (cov + cov.T)
        energy = 0.5 * float(mean @ mean) + 0.5 * float(np.trace(cov))
        energy_stderr = float(np.sqrt(max(total.m2[dim, dim], 0.0) / (size - 1) / size))
        return MomentSnapshot(mean=mean, cov=cov, energy=energy, energy_pert=energy - energy_eq, energy_stderr=energy_stderr)

    def prepare_initial_state(
            self,
            system: QuadraticSystem,
            size: int,
            forcing_pert: np.ndarray,
            T_spin: float,
            T_pert: float,
            dt: float,
            seed: int,
            chunk_size: int | None = None,
    ) -> tuple[EquilibriumStats, Ensemble]:
        """Spin up under F_eq, record equilibrium statistics, then push with F_eq + dF_p.

        The returned ensemble has its clock reset to 0, the control takeover time.
        A zero perturbation skips the push so the perturbed state is the equilibrium one.

        Args:
            system (QuadraticSystem): Dynamics
            size (int): Ensemble size M
            forcing_pert (np.ndarray): Constant pre-forcing perturbation dF_p
            T_spin (float): Spin-up time
            T_pert (float): Perturbation time
            dt (float): Integration step
            seed (int): Ensemble seed
            chunk_size (int | None): Samples per random stream

        Returns:
            tuple[EquilibriumStats, Ensemble]: Equilibrium statistics and the perturbed ensemble
        """
        forcing_pert = np.asarray(forcing_pert, dtype=float)
        ens = self.cold_start(system, size, seed, chunk_size)
        logging.info(f"EnsembleService.prepare_initial_state: spin-up of {size} samples for T = {T_spin}")
        self.integrate(system, ens, system.forcing_eq, T_spin, dt)
        snap = self.compute_statistics(ens)
        eq_stats = EquilibriumStats(mean=snap.mean, cov=snap.cov, energy=snap.energy, energy_stderr=snap.energy_stderr)
        logging.info(f"EnsembleService.prepare_initial_state: E_eq = {snap.energy:.6g} +/- {snap.energy_stderr:.2g}")

        if np.any(forcing_pert != 0.0):
            logging.info(f"EnsembleService.prepare_initial_state: perturbing for T = {T_pert}")
            self.integrate(system, ens, system.forcing_eq + forcing_pert, T_pert, dt)
        ens.time = 0.0
        return eq_stats, ens

    def forcing_at(self, grid: np.ndarray, values: np.ndarray, times: np.ndarray) -> np.ndarray:
        """Piecewise-linear interpolation of a (n_grid, N) forcing onto `times`."""
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        times = np.asarray(times, dtype=float)
        tol = 1e-9 * max(1.0, float(np.max(np.abs(grid))))
        if times.size and (times[0] < grid[0] - tol or times[-1] > grid[-1] + tol):
            raise ValueError(
                f"Forcing grid [{grid[0]}, {grid[-1]}] does not cover [{times[0]}, {times[-1]}]"
            )
        return np.stack([np.interp(times, grid, values[:, k]) for k in range(values.shape[1])], axis=1)

    def run_controlled(
            self,
            system: QuadraticSystem,
            ens0: Ensemble,
            T: float,
            dt: float,
            dt_out: float,
            kappa_grid: np.ndarray | None = None,
            kappa: np.ndarray | None = None,
            energy_eq: float = 0.0,
    ) -> MomentSeries:
        """Integrate under F_eq + kappa(t) and sample statistics every dt_out.

        kappa is piecewise-linear between the nodes of kappa_grid; omitting it gives the
        uncontrolled (natural decay) run. ens0 is not modified.

        Args:
            system (QuadraticSystem): Dynamics
            ens0 (Ensemble): Perturbed ensemble at t = 0
            T (float): Horizon
            dt (float): Integration step
            dt_out (float): Statistics interval, a multiple of dt
            kappa_grid (np.ndarray | None): Control grid covering [0, T]
            kappa (np.ndarray | None): (n_grid, N) forcing perturbation
            energy_eq (float): Equilibrium energy for E'

        Returns:
            MomentSeries: Statistics on the output grid 0, dt_out, ..., T
        """
        per_out = _check_grid_multiple(dt_out, dt, "Output interval")
        n_out = _check_grid_multiple(T, dt_out, "Horizon")
        n_steps = per_out * n_out
        step_times = ens0.time + dt * np.arange(n_steps)

        forcing = np.broadcast_to(system.forcing_eq, (n_steps, system.dim))
        if kappa is not None:
            if kappa_grid is None:
                raise ValueError("run_controlled: kappa needs its time grid")
            forcing = forcing + self.forcing_at(kappa_grid, kappa, np.append(step_times, ens0.time + T))[:-1]

        ens = ens0.copy()
        snapshots = [self.compute_statistics(ens, energy_eq)]
        for block in range(n_out):
            self._advance(system, ens, forcing[block * per_out:(block + 1) * per_out], dt)
            snapshots.append(self.compute_statistics(ens, energy_eq))
        times = ens0.time + dt_out * np.arange(n_out + 1)
        logging.info(
            f"EnsembleService.run_controlled: E'(0) = {snapshots[0].energy_pert:.4g}, "
            f"E'(T) = {snapshots[-1].energy_pert:.4g}"
        )
        return MomentSeries.from_snapshots(times, snapshots)

    def empirical_control(
            self, series: MomentSeries, mean_eq: np.ndarray, forcing_eq: np.ndarray, kappa: np.ndarray
    ) -> np.ndarray:
        """C_k = u_eq,k kappa_k + F_eq,k du_k + kappa_k du_k with the measured du = mean - u_eq.

        Args:
            series (MomentSeries): Controlled run
            mean_eq (np.ndarray): Equilibrium mean
            forcing_eq (np.ndarray): Equilibrium forcing
            kappa (np.ndarray): Forcing perturbation on the series grid, shape (n_t, N)

        Returns:
            np.ndarray: (n_t, N) realized controls
        """
        kappa = np.asarray(kappa, dtype=float)
        if kappa.shape != series.mean.shape:
            raise ValueError(
                f"EnsembleService.empirical_control: kappa shape {kappa.shape} does not match series {series.mean.shape}"
            )
        response = series.mean - mean_eq
        return mean_eq * kappa + forcing_eq * response + kappa * response

    def energy_balance(
            self, series: MomentSeries, forcing: np.ndarray, d: float, noise: np.ndarray, n_blocks: int = 10
    ) -> tuple[float, float]:
        """Time-averaged residual of dE/dt + 2dE - u.F - tr(Q)/2 and its batch-means standard error.

        Args:
            series (MomentSeries): Run under the constant forcing `forcing`
            forcing (np.ndarray): Deterministic forcing during the run
            d (float): Uniform damping
            noise (np.ndarray): Noise amplitudes
            n_blocks (int): Number of time blocks for the standard error

        Returns:
            tuple[float, float]: Mean residual and its standard error
        """
        if series.times.size < 3:
            raise ValueError("energy_balance needs at least three output times")
        dE = np.gradient(series.energy, series.times)
        residual = dE + 2.0 * d * series.energy - series.mean @ forcing - 0.5 * float(np.sum(np.asarray(noise) ** 2))
        blocks = np.array_split(residual, min(n_blocks, residual.size))
        block_means = np.array([b.mean() for b in blocks])
        stderr = float(block_means.std(ddof=1) / np.sqrt(block_means.size)) if block_means.size > 1 else 0.0
        # ensemble sampling error of the 2dE term, for runs whose time fluctuations are tiny
        stderr = max(stderr, 2.0 * d * float(np.mean(series.energy_stderr)) / np.sqrt(block_means.size))
        return float(residual.mean()), stderr
