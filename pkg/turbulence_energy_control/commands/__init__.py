"""Commands module."""
from .cmd_control import bp as bp_control  # type: ignore
from .cmd_invert import bp as bp_invert  # type: ignore
from .cmd_kernels import bp as bp_kernels  # type: ignore
from .cmd_run import bp as bp_run  # type: ignore
from .cmd_validate import bp as bp_validate  # type: ignore

__all__ = [
    "bp_control",
    "bp_invert",
    "bp_kernels",
    "bp_run",
    "bp_validate"
]
