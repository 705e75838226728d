"""Blueprint and application plumbing for the command-line surface"""
import argparse
import logging
from dataclasses import dataclass, field
from typing import Any, Callable

from turbulence_energy_control.models.experiment import ConfigError, ExperimentConfig
from turbulence_energy_control.models.validation import ValidationReport
from turbulence_energy_control.services.experiment_service import ExperimentService

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

Handler = Callable[[argparse.Namespace], int]
ArgumentHook = Callable[[argparse.ArgumentParser], None]


class ValidationFailed(Exception):
    """An experiment document parsed but failed validation."""

    def __init__(self, report: ValidationReport) -> None:
        super().__init__(f"Configuration '{report.subject}' is invalid: {'; '.join(report.reasons())}")
        self.report = report


@dataclass
class Blueprint:
    """One subcommand: its name, help text, argument hook and handler."""
    name: str
    help: str = ""
    add_arguments: ArgumentHook | None = None
    handler: Handler | None = None

    def arguments(self, func: ArgumentHook) -> ArgumentHook:
        """Decorator registering the function that declares the subcommand's arguments."""
        self.add_arguments = func
        return func

    def command(self, func: Handler) -> Handler:
        """Decorator registering the subcommand handler; it returns the exit code."""
        self.handler = func
        return func


@dataclass
class CommandApp:
    """argparse front end dispatching to registered blueprints with fixed exit codes."""
    prog: str
    description: str = ""
    blueprints: dict[str, Blueprint] = field(default_factory=dict)

    def register_blueprint(self, bp: Blueprint) -> None:
        if bp.handler is None:
            raise ValueError(f"Blueprint '{bp.name}' has no handler")
        self.blueprints[bp.name] = bp

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog=self.prog, description=self.description)
        subparsers = parser.add_subparsers(dest="command", required=True)
        for bp in self.blueprints.values():
            sub = subparsers.add_parser(bp.name, help=bp.help, description=bp.help)
            if bp.add_arguments is not None:
                bp.add_arguments(sub)
            sub.set_defaults(handler=bp.handler)
        return parser

    def run(self, argv: list[str] | None = None) -> int:
        """Parse argv and run the chosen subcommand.

        Returns:
            int: 0 on success, 1 on invalid arguments or configuration, 2 on runtime failure
        """
        parser = self.build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            return EXIT_OK if e.code in (0, None) else EXIT_VALIDATION
        try:
            return args.handler(args)
        except ConfigError as e:
            logging.error(f"{self.prog} {args.command}: {e}")
            return EXIT_VALIDATION
        except ValidationFailed as e:
            for reason in e.report.reasons():
                logging.error(f"{self.prog} {args.command}: {reason}")
            return EXIT_VALIDATION
        except Exception as e:
            logging.error(f"{self.prog} {args.command}: {e}", exc_info=True)
            return EXIT_RUNTIME


def add_config_argument(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("config", nargs=None if required else "?", help="Experiment configuration (JSON)")


def add_output_argument(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--out", required=required, help="Output directory")


def prepare_config(
        service: ExperimentService,
        path: str | None,
        preset: str | None = None,
        overrides: dict[str, Any] | None = None,
) -> ExperimentConfig:
    """Load, validate and parse a document; invalid documents raise ValidationFailed."""
    document = service.load_document(path, preset, overrides)
    report = service.validate_config(document)
    if not report.passed:
        raise ValidationFailed(report)
    return service.parse(document)
