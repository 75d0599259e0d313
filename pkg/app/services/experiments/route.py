import argparse
from typing import Callable, Dict, List, Optional

from app.services.experiments.controller import ExperimentController

experiment_controller = ExperimentController()

# subcommand -> handler
COMMANDS: Dict[str, Callable[..., int]] = {
    "simulate": experiment_controller.cmd_simulate,
    "validate": experiment_controller.cmd_validate,
    "sweep": experiment_controller.cmd_sweep,
    "bench": experiment_controller.cmd_bench,
}

HELP = {
    "simulate": "run the multi-round mechanism and write rounds.csv and summary.json",
    "validate": "compare sampled against exact core-selecting solutions over an m grid",
    "sweep": "accumulated utility of one deviating participant per (mode, strategy, degree)",
    "bench": "coalitions evaluated and round time per (n, mode)",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedcore",
        description="Core-selecting incentive mechanism for federated learning: simulations and experiments.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=HELP[name])
        sub.add_argument("--config", required=True, metavar="PATH", help="KEY=VALUE experiment file")
        sub.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
        sub.add_argument("--seed", type=int, metavar="N", help="base seed (overrides the config)")
        sub.add_argument("--plots", choices=["on", "off"], help="write SVG plots (overrides the config)")
    return parser


def dispatch(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](args.config, out=args.out, seed=args.seed, plots_flag=args.plots)
