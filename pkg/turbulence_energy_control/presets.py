"""Named experiment documents for the reference test regimes.

A user document naming a preset is merged over it section by section, so any
value can be overridden. Horizons and control weights are not fixed by the
reference experiments; the values here cover roughly ten natural energy
decay times (1 / 2d) so the controlled runs visibly beat natural decay.
"""
import copy
from typing import Any

# Near-Gaussian triad with strong energy transfer; only F_3 is pushed
TRIAD_REGIME_1: dict[str, Any] = {
    "system": {
        "model": "triad",
        "d": [1.0, 1.0, 1.0],
        "L": [3.0, 2.0, -1.0],
        "B": [1.0, -0.6, -0.4],
        "F": [1.0, 1.0, -1.0],
        "sigma": [0.5, 0.5, 0.5],
    },
    "perturbation": [0.0, 0.0, -4.0],
    "protocol": {"T_spin": 50.0, "T_pert": 20.0, "T": 5.0, "dt": 1e-3, "dt_out": 0.01, "control_dt": 0.01},
    "control": {"alpha": 0.1, "k_T": 0.0},
    "kernels": {"T_sample": 3000.0, "dtau": 0.01, "tau_max": 10.0, "n_chains": 100, "burn_in": 20.0},
    "ensemble": {"size": 10_000},
}

# Intermittent, strongly non-Gaussian triad with an energy cascade out of u_1
TRIAD_REGIME_2: dict[str, Any] = {
    "system": {
        "model": "triad",
        "d": [1.0, 1.0, 1.0],
        "L": [0.03, 0.02, -0.01],
        "B": [2.0, -1.0, -1.0],
        "F": [2.0, 2.0, 2.0],
        "sigma": [2.0, 1.0, 1.0],
    },
    "perturbation": [2.0, 2.0, 2.0],
    "protocol": {"T_spin": 50.0, "T_pert": 20.0, "T": 5.0, "dt": 1e-3, "dt_out": 0.01, "control_dt": 0.01},
    "control": {"alpha": 0.1, "k_T": 0.0},
    "kernels": {"T_sample": 3000.0, "dtau": 0.01, "tau_max": 10.0, "n_chains": 100, "burn_in": 20.0},
    "ensemble": {"size": 10_000},
}

# Dispersion-free triad where the high-order forcing settles on a second equilibrium of equal energy
TRIAD_ALT_EQ: dict[str, Any] = {
    "system": {
        "model": "triad",
        "d": [1.0, 1.0, 1.0],
        "L": [0.0, 0.0, 0.0],
        "B": [1.0, -0.6, -0.4],
        "F": [0.5, 0.5, 0.5],
        "sigma": [0.5, 0.5, 0.5],
    },
    "perturbation": [0.0, 0.0, -1.5],
    "protocol": {"T_spin": 50.0, "T_pert": 20.0, "T": 5.0, "dt": 1e-3, "dt_out": 0.01, "control_dt": 0.01},
    "control": {"alpha": 0.1, "k_T": 0.0},
    "strategy": "high-closure",
    "kernels": {"T_sample": 3000.0, "dtau": 0.01, "tau_max": 10.0, "n_chains": 100, "burn_in": 20.0},
    "ensemble": {"size": 10_000},
}

# 40-mode Lorenz '96 pushed from the weakly chaotic F = 5 regime into the F = 8 regime
LORENZ96_5_TO_8: dict[str, Any] = {
    "system": {"model": "lorenz96", "dim": 40, "F": 5.0, "sigma": 0.0},
    "perturbation": 3.0,
    "protocol": {"T_spin": 50.0, "T_pert": 20.0, "T": 5.0, "dt": 5e-3, "dt_out": 0.05, "control_dt": 0.05},
    "control": {"alpha": 1.0, "k_T": 0.0},
    "strategy": "high-closure",
    "kernels": {
        "T_sample": 4000.0,
        "dtau": 0.05,
        "tau_max": 20.0,
        "n_chains": 40,
        "burn_in": 20.0,
        "cov_max_starts": 100,
        "save_cov_kernel": False,
    },
    "ensemble": {"size": 10_000, "save_covariance": False},
}

PRESETS: dict[str, dict[str, Any]] = {
    "triad-regime1": TRIAD_REGIME_1,
    "triad-regime2": TRIAD_REGIME_2,
    "triad-alt-eq": TRIAD_ALT_EQ,
    "lorenz96-5to8": LORENZ96_5_TO_8,
}


def merge_documents(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Recursive merge; objects merge key by key, everything else is replaced."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_documents(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def get_preset(name: str) -> dict[str, Any]:
    """Copy of a preset document with its name filled in.

    Args:
        name (str): Preset name

    Returns:
        dict[str, Any]: Experiment document

    Raises:
        KeyError: Unknown preset
    """
    if name not in PRESETS:
        raise KeyError(f"Unknown preset '{name}', expected one of {', '.join(sorted(PRESETS))}")
    document = copy.deepcopy(PRESETS[name])
    document["preset"] = name
    document.setdefault("name", name)
    return document
