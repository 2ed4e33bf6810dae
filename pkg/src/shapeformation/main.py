import logging
import sys
from argparse import ArgumentParser, Namespace
from typing import Optional, Sequence

from .cli import CLI
from .experiments import TABLES
from .version import VERSION

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2


def parse_args(argv: Optional[Sequence[str]] = None) -> Namespace:
    parser = ArgumentParser(
        prog="shape-formation",
        description="Simulate shape-constrained formations and reproduce the reference experiments.",
    )
    parser.set_defaults(command=None)
    parser.add_argument(
        "--version",
        action="version",
        version="%(prog)s v{version}".format(version=VERSION),
    )
    common = ArgumentParser(add_help=False)
    common.add_argument("--out", help="Directory for CSV and summary files.")
    common.add_argument("--dt", type=float, help="Integration step; overrides the config.")
    common.add_argument("--tmax", type=float, help="Integration horizon; overrides the config.")
    common.add_argument("--seed", type=int, help="Seed for randomized suites.")
    common.add_argument(
        "--parallel",
        type=int,
        default=1,
        help="Number of worker processes for independent runs.",
    )
    common.add_argument(
        "--verbose",
        "-v",
        action="count",
        default=0,
        help="Log progress; repeat for debug output.",
    )
    subparsers = parser.add_subparsers(
        title="commands",
        metavar="{run,reproduce,scan-scale}",
        required=True,
    )
    parser_run = subparsers.add_parser(
        "run",
        parents=[common],
        description="Run the experiment described by a JSON config.",
    )
    parser_run.add_argument("config", help="Path to the experiment config.")
    parser_run.set_defaults(command="run_config")
    parser_reproduce = subparsers.add_parser(
        "reproduce",
        parents=[common],
        description="Run a built-in experiment and compare it with the published values.",
    )
    parser_reproduce.add_argument("table", choices=TABLES, help="The experiment to reproduce.")
    parser_reproduce.set_defaults(command="reproduce")
    parser_scan = subparsers.add_parser(
        "scan-scale",
        aliases=["scan"],
        parents=[common],
        description="Run constant-scale simulations over a grid of scales.",
    )
    parser_scan.add_argument("config", help="Path to the experiment config.")
    parser_scan.set_defaults(command="scan_scale")
    return parser.parse_args(argv)


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv).__dict__
    configure_logging(args.pop("verbose"))
    cli = CLI(
        sys.stdout,
        out=args.pop("out"),
        dt=args.pop("dt"),
        tmax=args.pop("tmax"),
        seed=args.pop("seed"),
        parallel=args.pop("parallel"),
    )
    try:
        ok = cli.run(**args)
    except ValueError as error:
        sys.stderr.write(f"{error}\n")
        return EXIT_INVALID
    return EXIT_OK if ok else EXIT_FAILED
