"""Configurations for the energy control toolkit"""
import os
import json
import logging
from typing import Any

SETTINGS_FILE = "local.settings.json"
_PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))


def _settings_candidates() -> list[str]:
    """STATCTRL_SETTINGS_FILE when set, else the working directory then the project root."""
    explicit = os.getenv("STATCTRL_SETTINGS_FILE")
    if explicit:
        return [explicit]
    return [os.path.join(os.getcwd(), SETTINGS_FILE), os.path.join(_PROJECT_ROOT, SETTINGS_FILE)]


def _load_local_settings() -> dict[str, Any]:
    """Values section of the first settings file found; empty when there is none."""
    for path in _settings_candidates():
        if not os.path.isfile(path):
            continue
        try:
            with open(path) as f:
                values = json.load(f).get("Values", {})
        except (OSError, json.JSONDecodeError, AttributeError) as e:
            logging.warning(f"config: ignoring unreadable settings file {path}: {e}")
            return {}
        return values if isinstance(values, dict) else {}
    return {}


_local_settings = _load_local_settings()


def _get_setting(var_name: str, required: bool = True, default: Any = None) -> Any:
    """Environment first, then the settings file, then the default."""
    value = os.environ.get(var_name, _local_settings.get(var_name))
    if value is not None:
        return value
    if default is not None:
        return default
    if required:
        raise ValueError(f"Missing required setting: '{var_name}'")
    return None


def _int_setting(var_name: str, default: int, minimum: int = 1) -> int:
    """Integer setting clamped from below; text that is not an integer raises ValueError."""
    raw = _get_setting(var_name, default=default)
    try:
        value = int(raw)
    except (TypeError, ValueError) as e:
        raise ValueError(f"Setting '{var_name}' must be an integer, got {raw!r}") from e
    return max(minimum, value)


# Worker threads for ensemble chunks and kernel chains; results do not depend on it
THREADS: int = _int_setting("STATCTRL_THREADS", default=os.cpu_count() or 1)

LOG_LEVEL: str = str(_get_setting("STATCTRL_LOG_LEVEL", default="INFO")).upper()

# Samples per random stream when a config does not set ensemble.chunk_size
CHUNK_SIZE: int = _int_setting("STATCTRL_CHUNK_SIZE", default=2048)

OUTPUT_DIR: str = _get_setting("STATCTRL_OUTPUT_DIR", default="runs")
