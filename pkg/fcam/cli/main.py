"""Command-line entry point: ``fcam simulate|fit|summarize|evaluate|study``.

Exit codes: 0 success, 2 validation error, 1 runtime error.
"""
import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from fcam import __version__
from fcam.cli.commands import evaluate, fit, simulate, study, summarize
from fcam.core.exceptions import FcamError
from fcam.core.logging import configure_logging

logger = logging.getLogger("fcam.cli")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcam", description="Bayesian spike detection and amplitude clustering for calcium imaging traces"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", dest="log_level", help="overrides FCAM_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (simulate, fit, summarize, evaluate, study):
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except (ValueError, ValidationError) as e:
        logger.debug("validation error", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FcamError, RuntimeError, OSError) as e:
        logger.debug("runtime error", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
