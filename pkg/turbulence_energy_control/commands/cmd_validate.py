"""Validate an experiment configuration without running it"""
import argparse
import json

from turbulence_energy_control.commands.base import EXIT_OK, EXIT_VALIDATION, Blueprint, add_config_argument
from turbulence_energy_control.services.experiment_service import ExperimentService

bp: Blueprint = Blueprint("validate", help="Check a configuration and print an itemized report")


@bp.arguments
def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_config_argument(parser, required=False)
    parser.add_argument("--preset", help="Validate a named preset (merged under the config, if given)")


@bp.command
def validate(args: argparse.Namespace) -> int:
    """Validate a configuration

    Prints the ValidationReport as JSON; never runs a simulation.

    Args:
        args (argparse.Namespace): Parsed arguments

    Returns:
        int: 0 if every check passed, 1 otherwise
    """
    experiment_service: ExperimentService = ExperimentService()  # initialize experiment service

    document = experiment_service.load_document(args.config, args.preset)  # ConfigError carries line/column
    report = experiment_service.validate_config(document)

    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.passed else EXIT_VALIDATION
