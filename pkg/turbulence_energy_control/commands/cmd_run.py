"""Run the full control experiment pipeline"""
import argparse
import json

from turbulence_energy_control.commands.base import (
    EXIT_OK,
    Blueprint,
    add_config_argument,
    add_output_argument,
    prepare_config,
)
from turbulence_energy_control.config import OUTPUT_DIR
from turbulence_energy_control.models.experiment import ConfigError, STRATEGY_CHOICES
from turbulence_energy_control.presets import PRESETS
from turbulence_energy_control.services.experiment_service import PIPELINE_STAGES, ExperimentService

bp: Blueprint = Blueprint("run", help="Spin up, estimate kernels, control, invert and compare against natural decay")


@bp.arguments
def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_config_argument(parser, required=False)
    add_output_argument(parser, required=False)
    parser.add_argument("--preset", choices=sorted(PRESETS), help="Start from a named preset")
    parser.add_argument("--strategy", choices=STRATEGY_CHOICES, help="Strategy, 'all' or 'none'")
    parser.add_argument("--seed", type=int, help="Override the configured seed")


@bp.command
def run(args: argparse.Namespace) -> int:
    """Run every stage and print the comparison summary

    Args:
        args (argparse.Namespace): Parsed arguments

    Returns:
        int: Exit code
    """
    if args.config is None and args.preset is None:
        raise ConfigError("run needs a configuration file or --preset")

    experiment_service: ExperimentService = ExperimentService()
    overrides: dict = {}
    if args.strategy is not None:
        overrides["strategy"] = args.strategy
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = prepare_config(experiment_service, args.config, args.preset, overrides)

    output_dir = args.out or cfg.output_dir or f"{OUTPUT_DIR}/{cfg.name}"
    result = experiment_service.run_experiment(cfg, output_dir, PIPELINE_STAGES)

    print(json.dumps(result.comparison, indent=2, sort_keys=True))
    return EXIT_OK
