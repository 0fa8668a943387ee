import argparse
import json
import logging
import os
import sys

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.commands import run, sweep, synth
from utils.errors import ConfigError, FedSurvError
from utils.logging_setup import setup_logger

logger = logging.getLogger("fedsurv")

COMMANDS = {
    "run": run,
    "sweep": sweep,
    "synth": synth
}


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors become ConfigError so they reach stderr as JSON like any other failure"""

    def error(self, message):
        raise ConfigError(message, prog=self.prog)


def build_parser():
    parser = ArgumentParser(
        prog="fedsurv",
        description="Federated discrete-time Cox survival simulator"
    )
    parser.add_argument("--debug", action="store_true", help="verbose logging")
    parser.add_argument("--log-file", dest="log_file", help="also write logs to this file")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS.values():
        command.register(subparsers)
    return parser


def main(argv=None):
    parser = build_parser()

    try:
        args = parser.parse_args(argv)
        setup_logger(debug=args.debug, logfile=args.log_file)
        return COMMANDS[args.command].execute(args)
    except FedSurvError as exc:
        logger.error("%s", exc)
        print(json.dumps(exc.to_dict(), default=str), file=sys.stderr)
        return 1
    except Exception as exc:
        logger.exception("Unexpected failure")
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "context": {}}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
