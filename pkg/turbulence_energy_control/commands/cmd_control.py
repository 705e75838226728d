"""Solve the optimal energy control problem for a configured experiment"""
import argparse

from turbulence_energy_control.commands.base import (
    EXIT_OK,
    Blueprint,
    add_config_argument,
    add_output_argument,
    prepare_config,
)
from turbulence_energy_control.services.experiment_service import CONTROL_STAGES, ExperimentService

bp: Blueprint = Blueprint("control", help="Spin up, perturb, and solve for the optimal energy path and controls")


@bp.arguments
def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_config_argument(parser)
    add_output_argument(parser)
    parser.add_argument("--seed", type=int, help="Override the configured seed")


@bp.command
def control(args: argparse.Namespace) -> int:
    """Write control.csv and energy_optimal.csv

    The initial energy perturbation E'(0) is measured on the perturbed ensemble,
    so this runs spin-up and the constant pre-forcing first.

    Args:
        args (argparse.Namespace): Parsed arguments

    Returns:
        int: Exit code
    """
    experiment_service: ExperimentService = ExperimentService()
    overrides = {"seed": args.seed} if args.seed is not None else None
    cfg = prepare_config(experiment_service, args.config, overrides=overrides)

    result = experiment_service.run_experiment(cfg, args.out, CONTROL_STAGES)

    if result.control is not None:
        print(f"E'(0) = {result.control.E_star[0]:.6g}, K(0) = {result.control.K[0]:.6g}; written to {result.output_dir}")
    return EXIT_OK
