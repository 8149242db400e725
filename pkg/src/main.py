"""
Command-line entry point: python -m src.main <simulate|scores|reproduce> [flags]
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from .handlers.app_handlers import EXIT_USAGE, TARGETS, CommandHandler
from .handlers.utility_handlers import (load_config_file, load_environment_config, parse_floats, parse_names,
                                        resolve_config, setup_logging)
from .states.app_state import AppState
from .states.errors import UsageError

logger = logging.getLogger(__name__)

# parser destinations that are not CliConfig fields
_PARSER_ONLY = ("config",)


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting with status 2"""
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common_flags() -> argparse.ArgumentParser:
    common = CliArgumentParser(add_help=False)
    # every flag defaults to None so lower configuration layers show through
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--model", choices=("spike", "mixture"))
    common.add_argument("--d", type=int, help="dimension")
    common.add_argument("--n", type=int, help="training sample size")
    common.add_argument("--m", type=int, help="number of spikes")
    common.add_argument("--n-test", dest="n_test", type=int, help="test sample size")
    common.add_argument("--beta", type=float, help="noise eigenvalue decay (spike model)")
    common.add_argument("--a", type=float, help="mean spacing (mixture model)")
    common.add_argument("--probs", type=parse_floats, help="three mixture weights, comma separated")
    common.add_argument("--sigma-sq", dest="sigma_sq", type=parse_floats, help="spike scales, comma separated")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--reps", type=int, help="Monte-Carlo repetitions")
    common.add_argument("--center", action=argparse.BooleanOptionalAction, default=None,
                        help="center the data before PCA")
    common.add_argument("--estimators", type=parse_names,
                        help="comma separated estimator list; bias tables always add theory and best")
    common.add_argument("--out", help="primary output path")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--full-precision", dest="full_precision", action="store_const", const=True,
                        default=None, help="write 17 significant digits")
    common.add_argument("--manifest", action="store_const", const=True, default=None,
                        help="print the resolved configuration")
    common.add_argument("--rotate-frame", dest="rotate_frame", action="store_const", const=True,
                        default=None, help="rotate the spike frame")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    return common


def build_parser() -> argparse.ArgumentParser:
    """
    Build the argument parser with its three subcommands

    :return: Parser whose errors raise UsageError
    """
    common = _common_flags()
    parser = CliArgumentParser(prog="hdlss", description="PC score bias in high dimension, low sample size")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("simulate", parents=[common], help="generate a dataset with oracle files")

    scores = commands.add_parser("scores", parents=[common], help="raw and bias-adjusted PC scores")
    scores.add_argument("--train", help="d x n training CSV")
    scores.add_argument("--test", help="d x n_test CSV for prediction scores")
    scores.add_argument("--estimator", help="asymptotic, jackknife1..3 or lzw")

    reproduce = commands.add_parser("reproduce", parents=[common], help="rerun a simulation study")
    reproduce.add_argument("target", choices=TARGETS)
    reproduce.add_argument("--k", type=int, help="noise component for table1")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse flags, resolve the configuration and run the command

    :param argv: Arguments without the program name (default: sys.argv[1:])
    :return: Exit code
    """
    try:
        args = vars(build_parser().parse_args(argv))
        file_values = load_config_file(args["config"]) if args.get("config") else {}
        flags = {key: value for key, value in args.items() if key not in _PARSER_ONLY}
        config = resolve_config(flags, load_environment_config(), file_values)
        config.config = args.get("config")
        setup_logging(config.log_level)
    except UsageError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE

    logger.debug(f"Resolved configuration: {config.as_dict()}")
    return CommandHandler(AppState()).run_command(config)


if __name__ == "__main__":
    sys.exit(main())
