"""Service for building and checking quadratic energy-conserving systems."""
import logging
from typing import Any

import numpy as np

from turbulence_energy_control.models.experiment import SystemSpec
from turbulence_energy_control.models.quadratic_system import QuadraticSystem
from turbulence_energy_control.models.triad import StructureError, TriadParams
from turbulence_energy_control.models.validation import ValidationReport

_MC_BATCH = 100_000


def _detect_uniform_damping(damping: np.ndarray) -> float | None:
    d = -float(damping[0, 0])
    if d > 0 and np.array_equal(damping, -d * np.eye(damping.shape[0])):
        return d
    return None


def _scatter_rows(system: QuadraticSystem, contrib: np.ndarray) -> np.ndarray:
    """Sum per-entry contributions (..., nnz) into their output rows (..., N)."""
    if contrib.shape[-1] == 0:
        return np.zeros(contrib.shape[:-1] + (system.dim,))
    flat = contrib.reshape(-1, contrib.shape[-1])
    out = np.asarray(system.scatter.T @ flat.T).T
    return out.reshape(contrib.shape[:-1] + (system.dim,))


def _triad_tensor(B1: float, B2: float, B3: float) -> tuple[np.ndarray, np.ndarray]:
    index = np.array([[0, 1, 2], [1, 2, 0], [2, 0, 1]])
    return index, np.array([B1, B2, B3], dtype=float)


# noinspection PyMethodMayBeStatic
class DynamicsService:
    """Operations on QuadraticSystem: evaluation, validation and the concrete models."""

    def bilinear_apply(self, system: QuadraticSystem, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """B(u, v)_i = sum_jk b_ijk u_j v_k for a single state or a (M, N) batch.

        Args:
            system (QuadraticSystem): System whose tensor is applied
            u (np.ndarray): First argument, shape (N,) or (M, N)
            v (np.ndarray): Second argument, same shape as u

        Returns:
            np.ndarray: B(u, v), same shape as u
        """
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if u.shape != v.shape or u.shape[-1] != system.dim:
            raise ValueError(
                f"DynamicsService.bilinear_apply: expected two arrays ending in dimension {system.dim}, "
                f"got {u.shape} and {v.shape}"
            )
        i, j, k = system.bilinear_index.T
        contrib = system.bilinear_coef * u[..., j] * v[..., k]
        return _scatter_rows(system, contrib)

    def drift(self, system: QuadraticSystem, u: np.ndarray, forcing: np.ndarray) -> np.ndarray:
        """(L + D)u + B(u, u) + F for a single state or a (M, N) batch."""
        u = np.asarray(u, dtype=float)
        forcing = np.asarray(forcing, dtype=float)
        if forcing.shape != (system.dim,):
            raise ValueError(f"DynamicsService.drift: forcing must have shape ({system.dim},), got {forcing.shape}")
        return u @ system.linear_operator.T + self.bilinear_apply(system, u, u) + forcing

    def covariance_contraction(self, system: QuadraticSystem, cov: np.ndarray) -> np.ndarray:
        """sum_jk b_ijk R_jk, the covariance feedback on the mean equation."""
        cov = np.asarray(cov, dtype=float)
        if cov.shape[-2:] != (system.dim, system.dim):
            raise ValueError(f"DynamicsService.covariance_contraction: expected (..., {system.dim}, {system.dim}), got {cov.shape}")
        i, j, k = system.bilinear_index.T
        contrib = system.bilinear_coef * cov[..., j, k]
        return _scatter_rows(system, contrib)

    def verify_structure(
            self, system: QuadraticSystem, n_random: int = 1000, tol: float = 1e-12, seed: int = 0
    ) -> ValidationReport:
        """Check skewness, damping sign, energy conservation and the basis identities.

        Failures are report entries, never exceptions.

        Args:
            system (QuadraticSystem): System to check
            n_random (int): Number of random states for the energy-conservation test
            tol (float): Relative tolerance
            seed (int): Seed of the random states

        Returns:
            ValidationReport: Itemized result
        """
        if n_random < 1:
            raise ValueError("verify_structure needs n_random >= 1")
        report = ValidationReport(subject=system.name)

        skew_err = float(np.max(np.abs(system.skew + system.skew.T))) if system.dim else 0.0
        skew_scale = max(1.0, float(np.max(np.abs(system.skew))))
        report.add("skew_symmetric_L", skew_err <= tol * skew_scale, f"max |L + L^T| = {skew_err:.3e}")

        sym_damping = 0.5 * (system.damping + system.damping.T)
        top = float(np.max(np.linalg.eigvalsh(sym_damping)))
        damp_scale = max(1.0, float(np.max(np.abs(system.damping))))
        report.add("damping_negative_semidefinite", top <= tol * damp_scale, f"largest eigenvalue {top:.3e}")

        rng = np.random.default_rng(seed)
        worst = 0.0
        remaining = n_random
        while remaining > 0:
            batch = min(_MC_BATCH, remaining)
            u = rng.uniform(-10.0, 10.0, size=(batch, system.dim))
            flux = np.abs(np.einsum("mi,mi->m", u, self.bilinear_apply(system, u, u)))
            ratio = flux / np.maximum(np.linalg.norm(u, axis=1) ** 3, np.finfo(float).tiny)
            worst = max(worst, float(np.max(ratio)))
            remaining -= batch
        report.add("energy_conservation_random", worst <= tol, f"max |u.B(u,u)|/|u|^3 = {worst:.3e} over {n_random} states")

        tensor = system.dense_tensor()
        scale = max(1.0, float(np.max(np.abs(system.bilinear_coef)))) if system.bilinear_coef.size else 1.0
        diagonal = np.einsum("mii->mi", tensor)  # B(e_i, e_i)_m
        self_err = float(np.max(np.abs(diagonal))) if tensor.size else 0.0
        report.add("self_interaction_vanishes", self_err <= tol * scale, f"max |B(e_i,e_i)| = {self_err:.3e}")

        pair = np.einsum("iji->ij", tensor) + np.einsum("iij->ij", tensor)  # e_i.[B(e_j,e_i) + B(e_i,e_j)]
        pair_err = float(np.max(np.abs(pair))) if tensor.size else 0.0
        report.add("pair_interaction_vanishes", pair_err <= tol * scale, f"max |e_i.(B(e_j,e_i)+B(e_i,e_j))| = {pair_err:.3e}")

        if system.uniform_damping is not None:
            d = system.uniform_damping
            consistent = d > 0 and np.allclose(system.damping, -d * np.eye(system.dim), rtol=0.0, atol=tol * max(1.0, d))
            report.add("uniform_damping_flag", consistent, f"flag d = {d}")
        else:
            detected = _detect_uniform_damping(system.damping)
            report.add("uniform_damping_flag", detected is None, "D = -dI but uniform_damping flag not set" if detected else "")
        report.flags["uniform_damping"] = system.uniform_damping

        if not report.passed:
            logging.warning(f"DynamicsService.verify_structure: {system.name} failed: {report.reasons()}")
        return report

    def make_triad(self, params: TriadParams) -> QuadraticSystem:
        """Three-mode triad system; TriadParams enforces B1 + B2 + B3 = 0 and positive damping."""
        p = params
        skew = np.array([
            [0.0, -p.L3, p.L2],
            [p.L3, 0.0, -p.L1],
            [-p.L2, p.L1, 0.0],
        ])
        d = np.array([p.d1, p.d2, p.d3])
        index, coef = _triad_tensor(p.B1, p.B2, p.B3)
        uniform = float(d[0]) if np.all(d == d[0]) else None
        return QuadraticSystem(
            dim=3,
            skew=skew,
            damping=-np.diag(d),
            bilinear_index=index,
            bilinear_coef=coef,
            forcing_eq=np.array([p.F1, p.F2, p.F3]),
            noise=np.array([p.s1, p.s2, p.s3]),
            uniform_damping=uniform,
            name="triad",
        )

    def triad_like(self, B: tuple[float, float, float], noise: float = 0.0) -> QuadraticSystem:
        """Triad tensor with arbitrary couplings and unit damping, bypassing the sum-zero check."""
        index, coef = _triad_tensor(*B)
        return QuadraticSystem(
            dim=3,
            skew=np.zeros((3, 3)),
            damping=-np.eye(3),
            bilinear_index=index,
            bilinear_coef=coef,
            forcing_eq=np.zeros(3),
            noise=np.full(3, noise),
            uniform_damping=1.0,
            name="triad-unchecked",
        )

    def read_triad_params(self, system: QuadraticSystem) -> TriadParams:
        """Inverse of make_triad."""
        if system.dim != 3:
            raise StructureError(f"Not a triad system: dimension {system.dim}")
        coef = {tuple(int(x) for x in idx): float(b) for idx, b in zip(system.bilinear_index, system.bilinear_coef)}
        return TriadParams(
            *(-system.damping[k, k] for k in range(3)),
            system.skew[2, 1], system.skew[0, 2], system.skew[1, 0],
            coef.get((0, 1, 2), 0.0), coef.get((1, 2, 0), 0.0), coef.get((2, 0, 1), 0.0),
            *system.forcing_eq,
            *system.noise,
        )

    def make_lorenz96(self, dim: int, forcing: float, noise: float = 0.0) -> QuadraticSystem:
        """du_j/dt = (u_{j+1} - u_{j-2})u_{j-1} - u_j + F on a periodic ring.

        Args:
            dim (int): Number of sites, at least 4
            forcing (float): Constant forcing F
            noise (float): Additive noise amplitude on every site

        Returns:
            QuadraticSystem: Translation-invariant system with d = 1
        """
        if dim < 4:
            raise StructureError(f"Lorenz '96 needs dim >= 4, got {dim}")
        j = np.arange(dim)
        plus = np.stack([j, (j + 1) % dim, (j - 1) % dim], axis=1)
        minus = np.stack([j, (j - 2) % dim, (j - 1) % dim], axis=1)
        return QuadraticSystem(
            dim=dim,
            skew=np.zeros((dim, dim)),
            damping=-np.eye(dim),
            bilinear_index=np.concatenate([plus, minus]),
            bilinear_coef=np.concatenate([np.ones(dim), -np.ones(dim)]),
            forcing_eq=np.full(dim, float(forcing)),
            noise=np.full(dim, float(noise)),
            uniform_damping=1.0,
            translation_invariant=True,
            name=f"lorenz96-N{dim}-F{forcing:g}",
        )

    def build_system(self, spec: SystemSpec) -> QuadraticSystem:
        """QuadraticSystem from the 'system' section of an experiment document."""
        params = spec.params
        logging.info(f"DynamicsService.build_system: building {spec.model} system")
        if spec.model == "triad":
            def triple(key: str, default: Any = None) -> list[float]:
                value = params.get(key, default)
                if value is None:
                    raise StructureError(f"Triad parameter '{key}' is required")
                values = [float(value)] * 3 if isinstance(value, (int, float)) else [float(x) for x in value]
                if len(values) != 3:
                    raise StructureError(f"Triad parameter '{key}' needs three values, got {value!r}")
                return values
            return self.make_triad(TriadParams.from_vectors(
                triple("d", 1.0), triple("L", 0.0), triple("B"), triple("F", 0.0), triple("sigma", 0.0)
            ))
        if spec.model == "lorenz96":
            return self.make_lorenz96(int(params.get("dim", 40)), float(params.get("F", 8.0)), float(params.get("sigma", 0.0)))
        if spec.model == "custom":
            return self._build_custom(params)
        raise StructureError(f"Unknown system model '{spec.model}'")

    def _build_custom(self, params: dict[str, Any]) -> QuadraticSystem:
        """Explicit operators; bilinear entries are [i, j, k, b] with one-based indices."""
        try:
            dim = int(params["dim"])
            skew = np.asarray(params.get("skew", np.zeros((dim, dim))), dtype=float).reshape(dim, dim)
            damping_raw = params.get("damping", 1.0)
            if isinstance(damping_raw, (int, float)):
                damping = -float(damping_raw) * np.eye(dim)
            else:
                damping = np.asarray(damping_raw, dtype=float)
                damping = -np.diag(damping) if damping.ndim == 1 else damping.reshape(dim, dim)
            entries = np.asarray(params.get("bilinear", []), dtype=float).reshape(-1, 4)
            forcing = np.broadcast_to(np.asarray(params.get("F", 0.0), dtype=float), (dim,))
            noise = np.broadcast_to(np.asarray(params.get("sigma", 0.0), dtype=float), (dim,))
        except (KeyError, TypeError, ValueError) as e:
            raise StructureError(f"Invalid custom system parameters: {e}") from e
        index = entries[:, :3].astype(np.int64) - 1
        if index.size and (index.min() < 0 or index.max() >= dim):
            raise StructureError(f"Bilinear indices must lie in 1..{dim}")
        return QuadraticSystem(
            dim=dim,
            skew=skew,
            damping=damping,
            bilinear_index=index,
            bilinear_coef=entries[:, 3],
            forcing_eq=forcing,
            noise=noise,
            uniform_damping=_detect_uniform_damping(damping),
            translation_invariant=bool(params.get("translation_invariant", False)),
            name=str(params.get("name", "custom")),
        )
