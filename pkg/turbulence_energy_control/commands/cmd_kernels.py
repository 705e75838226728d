"""Estimate response kernels for a configured system"""
import argparse

from turbulence_energy_control.commands.base import (
    EXIT_OK,
    Blueprint,
    add_config_argument,
    add_output_argument,
    prepare_config,
)
from turbulence_energy_control.services.experiment_service import KERNEL_STAGES, ExperimentService

bp: Blueprint = Blueprint("kernels", help="Estimate the mean and covariance response kernels")


@bp.arguments
def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_config_argument(parser)
    add_output_argument(parser)
    parser.add_argument("--seed", type=int, help="Override the configured seed")


@bp.command
def kernels(args: argparse.Namespace) -> int:
    """Estimate kernels and write them with their ACF table and metadata

    Args:
        args (argparse.Namespace): Parsed arguments

    Returns:
        int: Exit code
    """
    experiment_service: ExperimentService = ExperimentService()
    overrides = {"seed": args.seed} if args.seed is not None else None
    cfg = prepare_config(experiment_service, args.config, overrides=overrides)

    result = experiment_service.run_experiment(cfg, args.out, KERNEL_STAGES)

    print(f"Kernels written to {result.output_dir}")
    return EXIT_OK
