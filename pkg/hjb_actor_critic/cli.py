"""Command line entry point: ``hjbac <command> [options]``.

Commands follow the shape of a Django management command: a ``Command`` class per
module in ``hjb_actor_critic.commands`` with ``add_arguments`` and ``handle``.
"""

import argparse
import importlib
import logging
import sys
from typing import Dict, List, Optional

from hjb_actor_critic import __version__
from hjb_actor_critic.errors import (
    CheckpointError,
    ConfigurationError,
    DivergenceError,
    MissingAnalyticSolutionError,
)
from hjb_actor_critic.util import resolve_threads

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2

VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG, 3: logging.DEBUG}

# Sub-command name -> module under hjb_actor_critic.commands.
COMMANDS: Dict[str, str] = {
    "list-problems": "list_problems",
    "train": "train",
    "verify-mc": "verify_mc",
    "study": "study",
    "replay": "replay",
}


class CommandError(Exception):
    """Usage error raised by a command; reported on stderr with exit code 1."""

    def __init__(self, message, returncode: int = EXIT_USAGE):
        """Keep the exit code next to the message."""
        super().__init__(message)
        self.returncode = returncode


class CommandParser(argparse.ArgumentParser):
    """Argument parser that raises CommandError instead of exiting with status 2."""

    def error(self, message):
        """Report a usage error as a CommandError."""
        raise CommandError(f"{self.prog}: {message}")


def configure_logging(verbosity: int):
    """Send library logging to stderr at the level selected by --verbosity."""
    level = VERBOSITY_LEVELS.get(verbosity, logging.DEBUG)
    fmt = "%(asctime)s %(levelname)s %(name)s: %(message)s"
    if verbosity >= 3:
        fmt = "%(asctime)s %(levelname)s %(threadName)s %(name)s: %(message)s"
    logging.basicConfig(level=level, format=fmt, stream=sys.stderr, force=True)


def parse_int_list(value: str) -> List[int]:
    """Parse "64,256,1024" into [64, 256, 1024]."""
    try:
        return [int(item) for item in value.split(",") if item.strip()]
    except ValueError as ex:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {value!r}") from ex


def parse_float_list(value: str) -> List[float]:
    """Parse "0.1,0.5" into [0.1, 0.5]."""
    try:
        return [float(item) for item in value.split(",") if item.strip()]
    except ValueError as ex:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {value!r}") from ex


class BaseCommand:
    """Base class of every sub-command.

    Subclasses set ``help``, add their options in ``add_arguments`` and do the work in
    ``handle``, which returns an exit code or None for success.
    """

    help = ""

    def __init__(self, stdout=None, stderr=None):
        """Commands write human readable output to stdout and errors to stderr."""
        self.stdout = stdout or sys.stdout
        self.stderr = stderr or sys.stderr
        self.threads = 1

    def create_parser(self, prog_name: str, subcommand: str) -> CommandParser:
        """Parser with the global options followed by the command's own."""
        parser = CommandParser(prog=f"{prog_name} {subcommand}", description=self.help or None)
        parser.add_argument(
            "--threads",
            type=int,
            default=None,
            help="Worker threads for batch evaluation (default: $HJBAC_THREADS or 1).",
        )
        parser.add_argument(
            "-v",
            "--verbosity",
            type=int,
            default=1,
            choices=[0, 1, 2, 3],
            help="Verbosity level; 0=warnings, 1=progress, 2=debug, 3=debug with thread names.",
        )
        parser.add_argument("--seed", type=int, default=None, help="Seed overriding any configured seed.")
        self.add_arguments(parser)
        return parser

    def add_arguments(self, parser: CommandParser):
        """Entry point for subclassed commands to add custom arguments."""

    def handle(self, *args, **options) -> Optional[int]:
        """The actual logic of the command."""
        raise NotImplementedError("subclasses of BaseCommand must provide a handle() method")

    def write(self, message: str = ""):
        """Write one line to the command's stdout."""
        self.stdout.write(f"{message}\n")

    def execute(self, *args, **options) -> int:
        """Run handle() and translate the solver's exceptions into exit codes."""
        try:
            self.threads = resolve_threads(options.get("threads"))
            returncode = self.handle(*args, **options)
        except DivergenceError as ex:
            self.stderr.write(f"Training diverged: {ex}\n")
            return EXIT_DIVERGED
        except CommandError as ex:
            self.stderr.write(f"Error: {ex}\n")
            return ex.returncode
        except (ConfigurationError, CheckpointError, MissingAnalyticSolutionError) as ex:
            self.stderr.write(f"Error: {ex}\n")
            return EXIT_USAGE
        return EXIT_OK if returncode is None else returncode

    def run_from_argv(self, prog_name: str, subcommand: str, argv: List[str]) -> int:
        """Parse argv, configure logging and execute."""
        try:
            options = vars(self.create_parser(prog_name, subcommand).parse_args(argv))
        except CommandError as ex:
            self.stderr.write(f"{ex}\n")
            return EXIT_USAGE
        configure_logging(options["verbosity"])
        return self.execute(**options)


def load_command_class(name: str) -> BaseCommand:
    """Instantiate the Command class of a sub-command.

    Raises:
        CommandError: for an unknown sub-command name.
    """
    if name not in COMMANDS:
        raise CommandError(f"Unknown command {name!r}. Available commands: {', '.join(sorted(COMMANDS))}")
    module = importlib.import_module(f"hjb_actor_critic.commands.{COMMANDS[name]}")
    return module.Command


def call_command(name: str, *args, stdout=None, stderr=None, **options) -> int:
    """Run a command from Python, like typing it on the command line.

    Positional args are parsed as command line words; keyword options override the
    parsed values (use the option's destination name, e.g. ``lr_actor``).
    """
    command = load_command_class(name)(stdout=stdout, stderr=stderr)
    parser = command.create_parser("hjbac", name)
    try:
        parsed = vars(parser.parse_args([str(arg) for arg in args]))
    except CommandError as ex:
        command.stderr.write(f"{ex}\n")
        return EXIT_USAGE
    unknown = set(options) - set(parsed)
    if unknown:
        command.stderr.write(f"Error: unknown option(s) for {name}: {', '.join(sorted(unknown))}\n")
        return EXIT_USAGE
    parsed.update(options)
    return command.execute(**parsed)


def main(argv: Optional[List[str]] = None) -> int:
    """Console script entry point."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help", "help"):
        sys.stdout.write(f"usage: hjbac <command> [options]\n\nhjbac {__version__}\n\nAvailable commands:\n")
        for name in sorted(COMMANDS):
            sys.stdout.write(f"  {name}\n")
        return EXIT_OK if argv else EXIT_USAGE
    if argv[0] == "--version":
        sys.stdout.write(f"{__version__}\n")
        return EXIT_OK
    try:
        command_class = load_command_class(argv[0])
    except CommandError as ex:
        sys.stderr.write(f"Error: {ex}\n")
        return EXIT_USAGE
    return command_class().run_from_argv("hjbac", argv[0], argv[1:])


if __name__ == "__main__":
    sys.exit(main())
