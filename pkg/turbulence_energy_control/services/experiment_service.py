"""Service for configuring and running statistical energy control experiments."""
import dataclasses
import json
import logging
import os
from typing import Any, Iterable

import numpy as np
from scipy import integrate

from turbulence_energy_control.config import OUTPUT_DIR
from turbulence_energy_control.models.control import ControlProblem, ControlSolution
from turbulence_energy_control.models.experiment import (
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    STRATEGY_CHOICES,
    SYSTEM_MODELS,
    parse_config,
)
from turbulence_energy_control.models.forcing import (
    InversionContext,
    InversionScheme,
    Order,
    StrategyChoice,
)
from turbulence_energy_control.models.kernels import KernelEstimate
from turbulence_energy_control.models.moments import MomentSeries
from turbulence_energy_control.models.quadratic_system import QuadraticSystem
from turbulence_energy_control.models.triad import StructureError
from turbulence_energy_control.models.validation import ValidationReport
from turbulence_energy_control.presets import PRESETS, get_preset, merge_documents
from turbulence_energy_control.repos.kernel_repo import KernelRepository
from turbulence_energy_control.repos.manifest_repo import COMPARISON_FILE, EQUILIBRIUM_FILE, ManifestRepository
from turbulence_energy_control.repos.series_repo import SeriesRepository
from turbulence_energy_control.services.control_service import ControlService
from turbulence_energy_control.services.dynamics_service import DynamicsService
from turbulence_energy_control.services.ensemble_service import EnsembleService
from turbulence_energy_control.services.inversion_service import InversionService
from turbulence_energy_control.services.monitoring_service import MonitoringService
from turbulence_energy_control.services.response_service import (
    KERNEL_CHOICES,
    ResponseService,
    circulant_matrix,
    circulant_vector,
)
from turbulence_energy_control.utils import parallel_map, stage_manager

PIPELINE_STAGES = ("system", "spin_up", "kernels", "control", "inversion", "ensemble", "summary")
KERNEL_STAGES = ("system", "kernels")
CONTROL_STAGES = ("system", "spin_up", "control")
INVERSION_STAGES = ("system", "spin_up", "kernels", "control", "inversion")
# stages whose outputs a stage reads
STAGE_DEPENDENCIES: dict[str, tuple[str, ...]] = {
    "spin_up": ("system",),
    "kernels": ("system",),
    "control": ("system", "spin_up"),
    "inversion": ("system", "spin_up", "kernels", "control"),
    "ensemble": ("system", "spin_up"),
    "summary": ("system",),
}
UNCONTROLLED = "uncontrolled"
KERNEL_SOURCES = ("estimate", "load")


def _is_multiple(value: float, step: float) -> bool:
    if step <= 0:
        return False
    ratio = value / step
    count = round(ratio)
    return count >= 1 and abs(ratio - count) <= 1e-9 * max(1.0, ratio)


def _vector(value: tuple[float, ...] | float, dim: int, what: str) -> np.ndarray:
    """Scalar broadcast to every mode, or one value per mode."""
    array = np.asarray(value, dtype=float).ravel()
    if array.size == 1:
        return np.full(dim, float(array[0]))
    if array.size != dim:
        raise ValueError(f"{what} needs 1 or {dim} values, got {array.size}")
    return array


class ExperimentService:
    """Loads and validates experiment documents and runs the control pipeline stage by stage."""

    def __init__(
            self,
            dynamics_service: DynamicsService | None = None,
            ensemble_service: EnsembleService | None = None,
            response_service: ResponseService | None = None,
            control_service: ControlService | None = None,
            inversion_service: InversionService | None = None,
            series_repository: SeriesRepository | None = None,
            kernel_repository: KernelRepository | None = None,
            manifest_repository: ManifestRepository | None = None,
            max_workers: int | None = None,
    ) -> None:
        self.max_workers = max_workers
        self.dynamics_service = dynamics_service or DynamicsService()
        self.ensemble_service = ensemble_service or EnsembleService(self.dynamics_service, max_workers)
        self.response_service = response_service or ResponseService(self.ensemble_service, max_workers)
        self.control_service = control_service or ControlService()
        self.inversion_service = inversion_service or InversionService(self.dynamics_service, self.response_service)
        self.series_repository = series_repository or SeriesRepository()
        self.kernel_repository = kernel_repository or KernelRepository()
        self.manifest_repository = manifest_repository or ManifestRepository()

    # ------------------------------------------------------------------ configuration

    def load_document(
            self, path: str | None = None, preset: str | None = None, overrides: dict[str, Any] | None = None
    ) -> dict[str, Any]:
        """Read a JSON experiment document and apply command-line overrides.

        Args:
            path (str | None): Config file; None starts from an empty document
            preset (str | None): Preset name, replacing any preset the file names
            overrides (dict[str, Any] | None): Values merged over the document

        Returns:
            dict[str, Any]: Unresolved document (presets are merged by resolve_document)

        Raises:
            ConfigError: Unreadable file or invalid JSON, with line and column
        """
        document: dict[str, Any] = {}
        if path is not None:
            try:
                with open(path) as f:
                    text = f.read()
            except OSError as e:
                raise ConfigError(f"Cannot read configuration {path}: {e}") from e
            try:
                document = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Invalid JSON in {path}: {e.msg}", e.lineno, e.colno) from e
            if not isinstance(document, dict):
                raise ConfigError(f"Configuration {path} must contain a JSON object")
        if preset is not None:
            document["preset"] = preset
        if overrides:
            document = merge_documents(document, overrides)
        return document

    def resolve_document(self, document: dict[str, Any]) -> dict[str, Any]:
        """Merge the document over the preset it names; unknown presets are left for validation."""
        preset = document.get("preset")
        if isinstance(preset, str) and preset in PRESETS:
            return merge_documents(get_preset(preset), document)
        return document

    def parse(self, document: dict[str, Any]) -> ExperimentConfig:
        return parse_config(self.resolve_document(document))

    def validate_config(self, config: ExperimentConfig | dict[str, Any]) -> ValidationReport:
        """Itemized pass/fail report; never runs a simulation.

        Args:
            config (ExperimentConfig | dict[str, Any]): Parsed config or raw document

        Returns:
            ValidationReport: Checks in evaluation order

        Raises:
            ConfigError: The document does not have the shape of an experiment config
        """
        if isinstance(config, dict):
            preset = config.get("preset")
            report = ValidationReport(subject=str(config.get("name", preset or "experiment")))
            known = preset is None or (isinstance(preset, str) and preset in PRESETS)
            report.add("preset_known", known, "" if known else f"unknown preset '{preset}', expected one of {sorted(PRESETS)}")
            if not known:
                return report
            cfg = self.parse(config)
        else:
            cfg = config
            report = ValidationReport(subject=cfg.name)

        report.add(
            "system_model_known",
            cfg.system.model in SYSTEM_MODELS,
            f"unknown system model '{cfg.system.model}'",
        )
        try:
            system = self.dynamics_service.build_system(cfg.system)
        except (StructureError, ValueError) as e:
            report.add("system_valid", False, str(e))
            return report
        report.add("system_valid", True)
        structure = self.dynamics_service.verify_structure(system)
        report.add("energy_conserving_structure", structure.passed, "; ".join(structure.reasons()))
        report.flags["dim"] = system.dim
        report.flags["uniform_damping"] = system.uniform_damping
        report.flags["translation_invariant"] = system.translation_invariant
        report.flags["strategies"] = list(cfg.strategies)

        self._check_protocol(cfg, report)
        self._check_control(cfg, system, report)
        self._check_kernels(cfg, system, report)

        report.add("ensemble_size", cfg.ensemble.size >= 2, f"ensemble size must be at least 2, got {cfg.ensemble.size}")
        chunk = cfg.ensemble.chunk_size
        report.add("chunk_size", chunk is None or chunk >= 1, f"chunk size must be positive, got {chunk}")
        try:
            _vector(cfg.perturbation, system.dim, "perturbation")
            report.add("perturbation_shape", True)
        except ValueError as e:
            report.add("perturbation_shape", False, str(e))

        if report.passed:
            logging.info(f"ExperimentService.validate_config: {report.subject} passed {len(report.checks)} checks")
        else:
            logging.warning(f"ExperimentService.validate_config: {report.subject} failed: {report.reasons()}")
        return report

    def _check_protocol(self, cfg: ExperimentConfig, report: ValidationReport) -> None:
        p = cfg.protocol
        positive = {"T": p.T, "dt": p.dt, "dt_out": p.dt_out, "control_dt": p.control_dt, "T_spin": p.T_spin}
        bad = [f"{name}={value}" for name, value in positive.items() if value <= 0]
        if p.T_pert < 0:
            bad.append(f"T_pert={p.T_pert}")
        report.add("positive_times", not bad, f"nonpositive times: {', '.join(bad)}")
        if bad:
            return
        misaligned = []
        for what, value, step in (
                ("T_spin", p.T_spin, p.dt),
                ("dt_out", p.dt_out, p.dt),
                ("T", p.T, p.dt_out),
                ("T", p.T, p.control_dt),
        ):
            if not _is_multiple(value, step):
                misaligned.append(f"{what} ({value}) is not a multiple of {step}")
        if p.T_pert > 0 and not _is_multiple(p.T_pert, p.dt):
            misaligned.append(f"T_pert ({p.T_pert}) is not a multiple of {p.dt}")
        report.add("time_grids_aligned", not misaligned, "; ".join(misaligned))

    def _check_control(self, cfg: ExperimentConfig, system: QuadraticSystem, report: ValidationReport) -> None:
        alpha = np.asarray(cfg.control.alpha, dtype=float).ravel()
        report.add(
            "control_weights",
            bool(np.all(alpha > 0)),
            f"nonpositive control weight: alpha = {alpha.tolist()}",
        )
        report.add(
            "control_weights_shape",
            alpha.size in (1, system.dim),
            f"alpha needs 1 or {system.dim} values, got {alpha.size}",
        )
        report.add("terminal_weight", cfg.control.k_T >= 0, f"negative terminal weight k_T = {cfg.control.k_T}")
        active = cfg.control.active_modes
        report.add(
            "active_modes",
            active is None or (len(active) > 0 and all(1 <= k <= system.dim for k in active)),
            f"active modes must lie in 1..{system.dim}, got {active}",
        )
        report.add(
            "strategy_known",
            cfg.strategy in STRATEGY_CHOICES,
            f"unknown strategy '{cfg.strategy}', expected one of {', '.join(STRATEGY_CHOICES)}",
        )
        if cfg.strategy != "none":
            uniform = system.uniform_damping is not None and system.uniform_damping > 0
            report.add("uniform_damping", uniform, "energy control requires uniform damping")
        overrides = cfg.inversion.order_overrides
        bad_overrides = {k: v for k, v in overrides.items() if not 1 <= k <= system.dim or v not in ("low", "high")}
        report.add("order_overrides", not bad_overrides, f"invalid order overrides {bad_overrides}")
        schemes = [s.value for s in InversionScheme]
        report.add(
            "inversion_scheme",
            cfg.inversion.scheme in schemes,
            f"unknown inversion scheme '{cfg.inversion.scheme}', expected one of {schemes}",
        )

    def _check_kernels(self, cfg: ExperimentConfig, system: QuadraticSystem, report: ValidationReport) -> None:
        k = cfg.kernels
        report.add("kernel_source", k.source in KERNEL_SOURCES, f"unknown kernel source '{k.source}'")
        if k.source == "load":
            report.add("kernel_path", bool(k.path), "kernel source 'load' needs a path")
            return
        report.add("kernel_choice", k.which in KERNEL_CHOICES, f"unknown kernel choice '{k.which}'")
        needs_mean = any(label.endswith("-lr") for label in cfg.strategies)
        report.add(
            "mean_kernel_available",
            not needs_mean or k.which in ("mean", "both"),
            "linear-response strategies need the mean response kernel",
        )
        dtau = cfg.kernel_dtau
        p = cfg.protocol
        grid_ok = dtau > 0 and p.dt > 0 and _is_multiple(dtau, p.dt) and _is_multiple(k.tau_max, dtau)
        report.add(
            "kernel_grid",
            grid_ok,
            f"kernel lag step {dtau} must be a multiple of dt {p.dt} and divide tau_max {k.tau_max}",
        )
        report.add("kernel_chains", k.n_chains >= 2, f"kernel estimation needs at least 2 chains, got {k.n_chains}")
        if grid_ok and k.n_chains >= 2:
            n_lags = int(round(k.tau_max / dtau)) + 1
            n_records = int(np.floor(k.T_sample / k.n_chains / dtau + 1e-9)) + 1
            report.add(
                "kernel_sampling_window",
                n_records >= 2 * n_lags,
                f"each chain covers {(n_records - 1) * dtau:g} time units, at least {2 * (n_lags - 1) * dtau:g} needed",
            )
        truncate = k.truncate_modes
        report.add(
            "kernel_truncation",
            truncate is None or all(1 <= m <= system.dim for m in truncate),
            f"truncated modes must lie in 1..{system.dim}, got {truncate}",
        )

    # ------------------------------------------------------------------ pipeline

    def run_experiment(
            self, cfg: ExperimentConfig, output_dir: str | None = None, stages: Iterable[str] = PIPELINE_STAGES
    ) -> ExperimentResult:
        """Run the requested pipeline stages and write their artifacts.

        Stages: system, spin_up (spin-up, equilibrium statistics, constant pre-forcing),
        kernels, control, inversion, ensemble (uncontrolled and controlled runs from the
        same perturbed ensemble) and summary. A failing stage leaves a FAILED marker and
        earlier outputs in place; the manifest is written either way.

        Args:
            cfg (ExperimentConfig): Validated configuration
            output_dir (str | None): Run directory; defaults to the config's, then STATCTRL_OUTPUT_DIR/<name>
            stages (Iterable[str]): Stages to run, in pipeline order

        Returns:
            ExperimentResult: In-memory artifacts and the list of files written

        Raises:
            ValueError: Unknown stage names
            ConfigError: A stage is selected without the stages it depends on
            StageError: A stage failed; carries the stage name
        """
        stages = tuple(stages)
        unknown = set(stages) - set(PIPELINE_STAGES)
        if unknown:
            raise ValueError(f"Unknown pipeline stages {sorted(unknown)}")
        missing = {
            stage: deps for stage in stages
            if (deps := [dep for dep in STAGE_DEPENDENCIES.get(stage, ()) if dep not in stages])
        }
        if missing:
            detail = "; ".join(f"{stage} needs {', '.join(deps)}" for stage, deps in missing.items())
            raise ConfigError(f"Incomplete stage selection: {detail}")
        directory = output_dir or cfg.output_dir or os.path.join(OUTPUT_DIR, cfg.name)
        os.makedirs(directory, exist_ok=True)
        self.manifest_repository.clear_failed_marker(directory)
        monitoring = MonitoringService(directory, self.manifest_repository)
        monitoring.register_stages(list(stages))
        result = ExperimentResult(output_dir=directory)
        warnings: list[str] = []
        logging.info(f"ExperimentService.run_experiment: {cfg.name} stages {list(stages)} into {directory}")

        try:
            self._run_stages(cfg, stages, directory, monitoring, result, warnings)
        finally:
            self._write_manifest(cfg, directory, monitoring, result, warnings)
        return result

    def _run_stages(
            self,
            cfg: ExperimentConfig,
            stages: tuple[str, ...],
            directory: str,
            monitoring: MonitoringService,
            result: ExperimentResult,
            warnings: list[str],
    ) -> None:
        p = cfg.protocol

        with stage_manager(monitoring, "system"):
            system = self.dynamics_service.build_system(cfg.system)
            structure = self.dynamics_service.verify_structure(system)
            if not structure.passed:
                raise StructureError(f"System {system.name} fails structural checks: {'; '.join(structure.reasons())}")
            result.system = system
        dim = system.dim
        forcing_pert = _vector(cfg.perturbation, dim, "perturbation")

        mean_eq = cov_eq = ens0 = None
        if "spin_up" in stages:
            with stage_manager(monitoring, "spin_up"):
                eq_stats, ens0 = self.ensemble_service.prepare_initial_state(
                    system, cfg.ensemble.size, forcing_pert, p.T_spin, p.T_pert, p.dt, cfg.seed, cfg.ensemble.chunk_size
                )
                if system.uniform_damping is not None and system.uniform_damping > 0:
                    theory = self.control_service.equilibrium_energy(
                        eq_stats.mean, system.forcing_eq, system.uniform_damping, system.noise
                    )
                    eq_stats = dataclasses.replace(eq_stats, energy_theory=theory)
                mean_eq, cov_eq = eq_stats.mean, eq_stats.cov
                if system.translation_invariant:
                    mean_eq, cov_eq = circulant_vector(mean_eq), circulant_matrix(cov_eq)
                initial = self.ensemble_service.compute_statistics(ens0, eq_stats.energy)
                result.equilibrium = eq_stats
                result.initial_snapshot = initial
                result.outputs.append(self.manifest_repository.write_json(directory, EQUILIBRIUM_FILE, {
                    "mean": eq_stats.mean,
                    "cov": eq_stats.cov,
                    "energy": eq_stats.energy,
                    "energy_stderr": eq_stats.energy_stderr,
                    "energy_theory": eq_stats.energy_theory,
                    "initial_energy_pert": initial.energy_pert,
                    "initial_mean_response": initial.mean - eq_stats.mean,
                }))

        if "kernels" in stages and (cfg.strategies or "inversion" not in stages):
            with stage_manager(monitoring, "kernels"):
                result.kernels = self._kernels(cfg, system, directory, result)
                for kernel in (result.kernels.mean_kernel, result.kernels.cov_kernel):
                    if kernel is not None:
                        warnings.extend(kernel.warnings)

        if "control" in stages and (cfg.strategies or system.uniform_damping is not None):
            with stage_manager(monitoring, "control"):
                if system.uniform_damping is None:
                    raise ValueError("energy control requires uniform damping")
                active = None if cfg.control.active_modes is None else tuple(k - 1 for k in cfg.control.active_modes)
                problem = ControlProblem(
                    d=system.uniform_damping,
                    alpha=_vector(cfg.control.alpha, dim, "alpha"),
                    k_T=cfg.control.k_T,
                    T=p.T,
                    dt=p.control_dt,
                    E0=result.initial_snapshot.energy_pert,
                    active_modes=active,
                )
                result.control = self.control_service.solve(problem)
                result.outputs.append(self.series_repository.save_control(directory, result.control))
                result.outputs.append(self.series_repository.save_optimal_energy(directory, result.control))

        if "inversion" in stages and cfg.strategies:
            with stage_manager(monitoring, "inversion"):
                overrides = {k - 1: Order(v) for k, v in cfg.inversion.order_overrides.items()}
                ctx = InversionContext(
                    system=system,
                    mean_eq=mean_eq,
                    forcing_pert=forcing_pert,
                    initial_response=result.initial_snapshot.mean - mean_eq,
                    mean_kernel=result.kernels.mean_kernel,
                    cov_kernel=result.kernels.cov_kernel,
                    cov_eq=cov_eq,
                    closure_anchor=cfg.inversion.closure_anchor,
                    scheme=InversionScheme(cfg.inversion.scheme),
                )
                choices = [StrategyChoice.from_label(label, overrides) for label in cfg.strategies]
                control = result.control
                forcings = parallel_map(lambda choice: self.inversion_service.invert(control, choice, ctx), choices, self.max_workers)
                for forcing in forcings:
                    result.forcings[forcing.strategy.label] = forcing
                    result.outputs.extend(self.series_repository.save_forcing(directory, forcing))
                    warnings.extend(f"{forcing.strategy.label}: {w}" for w in forcing.diagnostics.warnings)

        if "ensemble" in stages:
            with stage_manager(monitoring, "ensemble"):
                self._ensemble_runs(cfg, system, ens0, mean_eq, result, directory)

        if "summary" in stages:
            with stage_manager(monitoring, "summary"):
                result.comparison = self.compare(cfg, system, result)
                result.outputs.append(self.manifest_repository.write_json(directory, COMPARISON_FILE, result.comparison))

    def _kernels(self, cfg: ExperimentConfig, system: QuadraticSystem, directory: str, result: ExperimentResult) -> KernelEstimate:
        k = cfg.kernels
        if k.source == "load":
            estimate = self.kernel_repository.load(k.path)
            for kernel in (estimate.mean_kernel, estimate.cov_kernel):
                if kernel is not None and kernel.provenance.system_hash != system.fingerprint():
                    raise ValueError(
                        f"Kernels at {k.path} were estimated for another system "
                        f"({kernel.provenance.system_hash} != {system.fingerprint()})"
                    )
            return estimate
        estimate = self.response_service.estimate_kernels(
            system,
            T_sample=k.T_sample,
            dtau=cfg.kernel_dtau,
            tau_max=k.tau_max,
            seed=cfg.seed,
            which=k.which,
            dt=cfg.protocol.dt,
            n_chains=k.n_chains,
            burn_in=k.burn_in,
            cov_max_starts=k.cov_max_starts,
            truncate_modes=None if k.truncate_modes is None else tuple(m - 1 for m in k.truncate_modes),
            chunk_size=cfg.ensemble.chunk_size,
        )
        result.outputs.extend(self.kernel_repository.save(os.path.join(directory, "kernels"), estimate, k.save_cov_kernel))
        return estimate

    def _ensemble_runs(
            self,
            cfg: ExperimentConfig,
            system: QuadraticSystem,
            ens0: Any,
            mean_eq: np.ndarray,
            result: ExperimentResult,
            directory: str,
    ) -> None:
        """Uncontrolled baseline plus one controlled run per strategy, all from copies of ens0."""
        p = cfg.protocol
        energy_eq = result.equilibrium.energy
        save_cov = cfg.ensemble.save_covariance
        baseline = self.ensemble_service.run_controlled(system, ens0, p.T, p.dt, p.dt_out, energy_eq=energy_eq)
        result.series[UNCONTROLLED] = baseline
        result.outputs.extend(self.series_repository.save_moments(directory, UNCONTROLLED, baseline, save_cov))

        for label, forcing in result.forcings.items():
            series = self.ensemble_service.run_controlled(
                system, ens0, p.T, p.dt, p.dt_out, kappa_grid=forcing.times, kappa=forcing.kappa, energy_eq=energy_eq
            )
            kappa_out = self.ensemble_service.forcing_at(forcing.times, forcing.kappa, series.times)
            controls = self.ensemble_service.empirical_control(series, mean_eq, system.forcing_eq, kappa_out)
            result.series[label] = series
            result.empirical_controls[label] = controls
            result.outputs.extend(self.series_repository.save_moments(directory, label, series, save_cov))
            result.outputs.append(self.series_repository.save_empirical_control(directory, label, series.times, controls))

    def compare(self, cfg: ExperimentConfig, system: QuadraticSystem, result: ExperimentResult) -> dict[str, Any]:
        """Tracking error, terminal ratio, realized cost and forcing diagnostics per run.

        Args:
            cfg (ExperimentConfig): Configuration of the run
            system (QuadraticSystem): Dynamics
            result (ExperimentResult): Artifacts of the earlier stages

        Returns:
            dict[str, Any]: comparison.json document
        """
        dim = system.dim
        control = result.control
        alpha = _vector(cfg.control.alpha, dim, "alpha")
        comparison: dict[str, Any] = {"dim": dim, "runs": {}}
        if control is not None:
            optimal_cost = self.control_service.realized_cost(
                control.times, control.E_star, control.C, alpha, cfg.control.k_T
            )
            comparison["optimal"] = {
                "E_pert_0": float(control.E_star[0]),
                "E_pert_T": float(control.E_star[-1]),
                "realized_cost": optimal_cost,
                "K_0": float(control.K[0]),
            }

        for label, series in result.series.items():
            controls = result.empirical_controls.get(label, np.zeros_like(series.mean))
            entry = self._run_metrics(series, controls, control, alpha, cfg.control.k_T, dim)
            forcing = result.forcings.get(label)
            if forcing is not None:
                entry["terminal_kappa_norm"] = forcing.diagnostics.terminal_kappa_norm
                entry["max_kappa_norm"] = forcing.diagnostics.max_kappa_norm
                entry["alternate_equilibrium"] = forcing.diagnostics.alternate_equilibrium
            comparison["runs"][label] = entry

        baseline = result.series.get(UNCONTROLLED)
        if baseline is not None and system.uniform_damping is not None and baseline.times.size >= 3:
            residual, stderr = self.ensemble_service.energy_balance(
                baseline, system.forcing_eq, system.uniform_damping, system.noise
            )
            comparison["energy_balance"] = {"residual": residual, "stderr": stderr}
        return comparison

    def _run_metrics(
            self,
            series: MomentSeries,
            controls: np.ndarray,
            control: ControlSolution | None,
            alpha: np.ndarray,
            k_T: float,
            dim: int,
    ) -> dict[str, Any]:
        e0 = float(series.energy_pert[0])
        eT = float(series.energy_pert[-1])
        entry: dict[str, Any] = {
            "E_pert_0": e0,
            "E_pert_T": eT,
            "terminal_ratio": abs(eT) / abs(e0) if e0 != 0 else None,
            "realized_cost": self.control_service.realized_cost(series.times, series.energy_pert, controls, alpha, k_T),
            "per_dimension": {"E_pert_0": e0 / dim, "E_pert_T": eT / dim},
        }
        if control is not None:
            e_star = np.interp(series.times, control.times, control.E_star)
            tracking = float(integrate.trapezoid(np.abs(series.energy_pert - e_star), series.times))
            entry["tracking_error"] = tracking
            entry["per_dimension"]["tracking_error"] = tracking / dim
        return entry

    def _write_manifest(
            self,
            cfg: ExperimentConfig,
            directory: str,
            monitoring: MonitoringService,
            result: ExperimentResult,
            warnings: list[str],
    ) -> None:
        d = result.system.uniform_damping if result.system is not None else None
        extra = {
            "name": cfg.name,
            "preset": cfg.preset,
            "strategies": list(cfg.strategies),
            "horizon": {
                "T": cfg.protocol.T,
                "natural_decay_times": None if d is None else 2.0 * d * cfg.protocol.T,
            },
            "outputs": sorted(os.path.relpath(path, directory) for path in result.outputs),
            "warnings": warnings,
            "failed": monitoring.has_failures(),
        }
        if result.initial_snapshot is not None:
            extra["initial_energy_pert"] = result.initial_snapshot.energy_pert
        try:
            path = self.manifest_repository.write_manifest(
                directory, cfg.document, cfg.seed, monitoring.get_stage_summary(), extra
            )
            result.outputs.append(path)
        except OSError as e:
            logging.error(f"ExperimentService.run_experiment: could not write manifest: {e}", exc_info=True)
