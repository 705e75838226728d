"""Experiment configuration model."""
from dataclasses import dataclass, field
from typing import Any

STRATEGY_CHOICES = ("all", "none", "low-lr", "low-closure", "high-lr", "high-closure")
SYSTEM_MODELS = ("triad", "lorenz96", "custom")


class ConfigError(ValueError):
    """Configuration document cannot be parsed or has the wrong shape."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None) -> None:
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{location}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class SystemSpec:
    """Model name plus its raw parameters (see DynamicsService.build_system)."""
    model: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ProtocolSpec:
    T_spin: float = 50.0
    T_pert: float = 20.0
    T: float = 5.0
    dt: float = 1e-3
    dt_out: float = 0.01
    control_dt: float = 0.01


@dataclass(frozen=True)
class ControlSpec:
    alpha: tuple[float, ...] | float = 1.0
    k_T: float = 0.0
    active_modes: tuple[int, ...] | None = None  # one-based, as written in the document


@dataclass(frozen=True)
class InversionSpec:
    scheme: str = "increment"
    closure_anchor: bool = True
    order_overrides: dict[int, str] = field(default_factory=dict)  # one-based mode -> "low" | "high"


@dataclass(frozen=True)
class KernelSpec:
    source: str = "estimate"
    path: str | None = None
    which: str = "both"
    T_sample: float = 3000.0
    dtau: float | None = None  # defaults to the control step
    tau_max: float = 10.0
    n_chains: int = 100
    burn_in: float = 20.0
    cov_max_starts: int | None = None
    truncate_modes: tuple[int, ...] | None = None  # one-based columns kept
    save_cov_kernel: bool = True


@dataclass(frozen=True)
class EnsembleSpec:
    size: int = 10_000
    chunk_size: int | None = None
    save_covariance: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment document."""
    name: str
    system: SystemSpec
    perturbation: tuple[float, ...] | float
    protocol: ProtocolSpec
    control: ControlSpec
    strategy: str
    inversion: InversionSpec
    kernels: KernelSpec
    ensemble: EnsembleSpec
    seed: int
    output_dir: str | None
    preset: str | None = None
    document: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def kernel_dtau(self) -> float:
        return self.kernels.dtau if self.kernels.dtau is not None else self.protocol.control_dt

    @property
    def strategies(self) -> tuple[str, ...]:
        if self.strategy == "all":
            return STRATEGY_CHOICES[2:]
        if self.strategy == "none":
            return ()
        return (self.strategy,)


def _section(doc: dict[str, Any], key: str) -> dict[str, Any]:
    value = doc.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"Section '{key}' must be an object, got {type(value).__name__}")
    return value


def _number(section: dict[str, Any], key: str, default: Any, where: str) -> Any:
    value = section.get(key, default)
    if value is None or isinstance(value, bool):
        return default if value is None else _fail(where, key, value)
    if not isinstance(value, (int, float)):
        _fail(where, key, value)
    return value


def _fail(where: str, key: str, value: Any) -> Any:
    raise ConfigError(f"'{where}.{key}' must be a number, got {value!r}")


def _vector_or_scalar(value: Any, where: str) -> tuple[float, ...] | float:
    if isinstance(value, bool):
        raise ConfigError(f"'{where}' must be a number or a list of numbers")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return tuple(float(v) for v in value)
    raise ConfigError(f"'{where}' must be a number or a list of numbers, got {value!r}")


def _modes(value: Any, where: str) -> tuple[int, ...] | None:
    if value is None:
        return None
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"'{where}' must be a list of integers, got {value!r}")
    return tuple(value)


def parse_config(doc: dict[str, Any]) -> ExperimentConfig:
    """Build an ExperimentConfig from a resolved JSON document.

    Shape and type errors raise ConfigError; value ranges are checked by validate_config.

    Args:
        doc (dict[str, Any]): Document with presets already merged in

    Returns:
        ExperimentConfig: Parsed configuration
    """
    if not isinstance(doc, dict):
        raise ConfigError("Experiment configuration must be a JSON object")

    system_doc = _section(doc, "system")
    model = system_doc.get("model")
    if not isinstance(model, str):
        raise ConfigError("'system.model' is required and must be a string")
    system = SystemSpec(model=model, params={k: v for k, v in system_doc.items() if k != "model"})

    protocol_doc = _section(doc, "protocol")
    defaults = ProtocolSpec()
    protocol = ProtocolSpec(**{
        name: float(_number(protocol_doc, name, getattr(defaults, name), "protocol"))
        for name in ("T_spin", "T_pert", "T", "dt", "dt_out", "control_dt")
    })

    control_doc = _section(doc, "control")
    control = ControlSpec(
        alpha=_vector_or_scalar(control_doc.get("alpha", 1.0), "control.alpha"),
        k_T=float(_number(control_doc, "k_T", 0.0, "control")),
        active_modes=_modes(control_doc.get("active_modes"), "control.active_modes"),
    )

    inversion_doc = _section(doc, "inversion")
    overrides_doc = inversion_doc.get("order_overrides", {}) or {}
    if not isinstance(overrides_doc, dict):
        raise ConfigError("'inversion.order_overrides' must be an object mapping modes to 'low' or 'high'")
    try:
        overrides = {int(k): str(v) for k, v in overrides_doc.items()}
    except ValueError as e:
        raise ConfigError(f"'inversion.order_overrides' keys must be mode numbers: {e}") from e
    inversion = InversionSpec(
        scheme=str(inversion_doc.get("scheme", "increment")),
        closure_anchor=bool(inversion_doc.get("closure_anchor", True)),
        order_overrides=overrides,
    )

    kernel_doc = _section(doc, "kernels")
    kernel_defaults = KernelSpec()
    dtau = _number(kernel_doc, "dtau", None, "kernels")
    cov_max_starts = _number(kernel_doc, "cov_max_starts", None, "kernels")
    kernels = KernelSpec(
        source=str(kernel_doc.get("source", kernel_defaults.source)),
        path=kernel_doc.get("path"),
        which=str(kernel_doc.get("which", kernel_defaults.which)),
        T_sample=float(_number(kernel_doc, "T_sample", kernel_defaults.T_sample, "kernels")),
        dtau=None if dtau is None else float(dtau),
        tau_max=float(_number(kernel_doc, "tau_max", kernel_defaults.tau_max, "kernels")),
        n_chains=int(_number(kernel_doc, "n_chains", kernel_defaults.n_chains, "kernels")),
        burn_in=float(_number(kernel_doc, "burn_in", kernel_defaults.burn_in, "kernels")),
        cov_max_starts=None if cov_max_starts is None else int(cov_max_starts),
        truncate_modes=_modes(kernel_doc.get("truncate_modes"), "kernels.truncate_modes"),
        save_cov_kernel=bool(kernel_doc.get("save_cov_kernel", True)),
    )

    ensemble_doc = _section(doc, "ensemble")
    chunk_size = _number(ensemble_doc, "chunk_size", None, "ensemble")
    ensemble = EnsembleSpec(
        size=int(_number(ensemble_doc, "size", EnsembleSpec.size, "ensemble")),
        chunk_size=None if chunk_size is None else int(chunk_size),
        save_covariance=bool(ensemble_doc.get("save_covariance", True)),
    )

    strategy = doc.get("strategy", "all")
    if not isinstance(strategy, str):
        raise ConfigError(f"'strategy' must be a string, got {strategy!r}")

    return ExperimentConfig(
        name=str(doc.get("name", doc.get("preset") or "experiment")),
        system=system,
        perturbation=_vector_or_scalar(doc.get("perturbation", 0.0), "perturbation"),
        protocol=protocol,
        control=control,
        strategy=strategy,
        inversion=inversion,
        kernels=kernels,
        ensemble=ensemble,
        seed=int(_number(doc, "seed", 0, "config")),
        output_dir=doc.get("output_dir"),
        preset=doc.get("preset"),
        document=doc,
    )


@dataclass
class ExperimentResult:
    """In-memory view of what a pipeline run wrote to its output directory."""
    output_dir: str
    system: Any = None
    equilibrium: Any = None
    initial_snapshot: Any = None
    kernels: Any = None
    control: Any = None
    forcings: dict[str, Any] = field(default_factory=dict)
    series: dict[str, Any] = field(default_factory=dict)
    empirical_controls: dict[str, Any] = field(default_factory=dict)
    comparison: dict[str, Any] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
