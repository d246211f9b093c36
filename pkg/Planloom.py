#!/usr/bin/env python3
# -*- coding: utf-8 -*-

from argparse import ArgumentParser, Namespace
from typing import Any, Dict, Union

from backend.base.custom_exceptions import PlanloomException
from backend.base.definitions import Config, Constants
from backend.base.helpers import check_min_python_version
from backend.base.logging import LOGGER, setup_logging
from backend.features.pipeline import (PlanOptions, cmd_build_anchors,
                                       cmd_evaluate, cmd_gen_synthetic,
                                       cmd_plan, cmd_report, cmd_train,
                                       render_table)
from backend.internals.settings import load_config


def _overrides(args: Namespace) -> Dict[str, Any]:
    """Config values given as flags; missing flags stay None and are ignored."""
    values = {
        "seed": getattr(args, "seed", None),
        "epochs": getattr(args, "epochs", None),
        "learning_rate": getattr(args, "learning_rate", None),
        "workers": getattr(args, "workers", None),
        "log_level": getattr(args, "LogLevel", None)
    }
    if args.command == "train":
        values["decoder_layers"] = args.layers
    return values


def _plan_options(args: Namespace) -> PlanOptions:
    return PlanOptions(
        use_scorer=not args.no_scorer,
        use_postproc=not args.no_postproc,
        layers=args.layers
    )


def _main(args: Namespace) -> int:
    """Run one command.

    Args:
        args (Namespace): The parsed command line.

    Raises:
        PlanloomException: A stage failed on its inputs.

    Returns:
        int: The exit code.
    """
    config: Config = load_config(args.config, _overrides(args))
    setup_logging(args.LogFolder, args.LogFile, config.log_level)

    if args.command == "gen-synthetic":
        cmd_gen_synthetic(args.out, args.count, config.seed, config)

    elif args.command == "build-anchors":
        cmd_build_anchors(args.models, config, args.dataset)

    elif args.command == "train":
        cmd_train(args.dataset, args.models, config, mining=not args.no_mining)

    elif args.command == "plan":
        cmd_plan(args.dataset, args.models, args.out, config, _plan_options(args))

    elif args.command == "evaluate":
        summary = cmd_evaluate(args.dataset, args.models, args.out, config, _plan_options(args))
        print(render_table(summary))

    elif args.command == "report":
        print(cmd_report(args.summary))

    return 0


def _build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        description="Planloom generates, scores and selects driving trajectories with a refined anchor decoder and a learned scorer."
    )
    parser.add_argument(
        '-c', '--config',
        type=str,
        help="A flat TOML file with settings; flags override its values"
    )

    fs = parser.add_argument_group(title="Logging")
    fs.add_argument(
        '-l', '--LogFolder',
        type=str,
        help="The folder in which the logs from Planloom will be stored"
    )
    fs.add_argument(
        '-f', '--LogFile',
        type=str,
        help="The filename of the file in which the logs from Planloom will be stored"
    )
    fs.add_argument(
        '--LogLevel',
        type=str,
        help=f"Minimum level of emitted log records (default {Constants.DEFAULT_LOG_LEVEL})"
    )

    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-synthetic", help="Write a deterministic synthetic dataset")
    gen.add_argument('--out', type=str, required=True, help="Dataset folder to create")
    gen.add_argument('--count', type=int, required=True, help="Number of scenarios")
    gen.add_argument('--seed', type=int, help="Dataset seed")

    anchors = commands.add_parser("build-anchors", help="Cluster trajectories into the anchor dictionary")
    anchors.add_argument('--models', type=str, required=True, help="Model folder")
    anchors.add_argument('--dataset', type=str, help="Dataset whose human trajectories join the corpus")
    anchors.add_argument('--seed', type=int, help="Clustering seed")

    train = commands.add_parser("train", help="Train the decoder and the scorer")
    train.add_argument('--dataset', type=str, required=True, help="Training dataset folder")
    train.add_argument('--models', type=str, required=True, help="Model folder holding the anchors")
    train.add_argument('--seed', type=int, help="Training seed")
    train.add_argument('--epochs', type=int, help="Number of epochs")
    train.add_argument('--learning-rate', dest="learning_rate", type=float, help="SGD step size")
    train.add_argument('--layers', type=int, help="Number of decoder layers")
    train.add_argument('--no-mining', action="store_true", help="Train without upsampling hard cases")
    train.add_argument('--workers', type=int, help="Threads for rendering BEV grids")

    for name, text in (("plan", "Write the chosen trajectory per scenario"),
                       ("evaluate", "Plan and score every scenario, write reports")):
        sub = commands.add_parser(name, help=text)
        sub.add_argument('--dataset', type=str, required=True, help="Dataset folder")
        sub.add_argument('--models', type=str, required=True, help="Model folder")
        sub.add_argument('--out', type=str, required=True, help="Output folder")
        sub.add_argument('--seed', type=int, help="Seed of the random scores used with --no-scorer")
        sub.add_argument('--layers', type=int, help="Run only the first k decoder layers")
        sub.add_argument('--no-scorer', action="store_true", help="Select by seeded random scores")
        sub.add_argument('--no-postproc', action="store_true", help="Skip the image-space filter")
        sub.add_argument('--workers', type=int, help="Threads for scenario fan-out")

    report = commands.add_parser("report", help="Render the metric table of an evaluation")
    report.add_argument('summary', type=str, help="summary.json or the evaluation folder")

    return parser


def Planloom(argv: Union[list, None] = None) -> int:
    """The main function of Planloom.

    Returns:
        int: The return code.
    """
    parser = _build_parser()
    args = parser.parse_args(argv)

    if not check_min_python_version(*Constants.MIN_PYTHON_VERSION):
        return 1

    try:
        return _main(args)
    except PlanloomException as e:
        LOGGER.error(f"{args.command} failed: {e}")
        parser.exit(2, f"{parser.prog} {args.command}: error: {e}\n")


if __name__ == "__main__":
    exit(Planloom())
