"""Recover the forcing perturbation for one strategy"""
import argparse

from turbulence_energy_control.commands.base import (
    EXIT_OK,
    Blueprint,
    add_config_argument,
    add_output_argument,
    prepare_config,
)
from turbulence_energy_control.models.forcing import STRATEGY_LABELS
from turbulence_energy_control.services.experiment_service import INVERSION_STAGES, ExperimentService

bp: Blueprint = Blueprint("invert", help="Compute kappa(t) for one strategy from the optimal controls")


@bp.arguments
def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_config_argument(parser)
    add_output_argument(parser)
    parser.add_argument("--strategy", required=True, choices=STRATEGY_LABELS, help="Inversion strategy")
    parser.add_argument("--seed", type=int, help="Override the configured seed")


@bp.command
def invert(args: argparse.Namespace) -> int:
    """Write forcing_<strategy>.csv and its diagnostics

    Args:
        args (argparse.Namespace): Parsed arguments

    Returns:
        int: Exit code
    """
    experiment_service: ExperimentService = ExperimentService()
    overrides: dict = {"strategy": args.strategy}
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = prepare_config(experiment_service, args.config, overrides=overrides)

    result = experiment_service.run_experiment(cfg, args.out, INVERSION_STAGES)

    forcing = result.forcings[args.strategy]
    if forcing.diagnostics.alternate_equilibrium:
        print(f"warning: forcing for {args.strategy} does not vanish at T (alternate equilibrium)")
    print(f"Forcing for {args.strategy} written to {result.output_dir}")
    return EXIT_OK
