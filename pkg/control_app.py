"""Command-line entry point for statistical energy control experiments"""
import logging
import sys

from turbulence_energy_control.commands import bp_control
from turbulence_energy_control.commands import bp_invert
from turbulence_energy_control.commands import bp_kernels
from turbulence_energy_control.commands import bp_run
from turbulence_energy_control.commands import bp_validate
from turbulence_energy_control.commands.base import CommandApp
from turbulence_energy_control.config import LOG_LEVEL

app = CommandApp(prog="statctrl", description="Statistical energy control of quadratic turbulent systems")

app.register_blueprint(bp_validate)
app.register_blueprint(bp_kernels)
app.register_blueprint(bp_control)
app.register_blueprint(bp_invert)
app.register_blueprint(bp_run)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(message)s")
    return app.run(argv)


if __name__ == "__main__":
    sys.exit(main())
