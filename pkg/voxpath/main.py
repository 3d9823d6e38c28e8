"""Command-line entry point for voxpath."""

import argparse
import logging
import sys
from typing import Optional, Sequence

from voxpath import __version__
from voxpath.commands import COMMANDS
from voxpath.commands.common import positive_int
from voxpath.config import get_settings, load_run_config
from voxpath.errors import VoxpathError
from voxpath.services.audit import get_audit_service

logger = logging.getLogger(__name__)


def configure_logging(level: str) -> None:
    # stdout carries tables and predictions, so logs go to stderr
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxpath",
        description="Pathological voice classification from sustained-vowel recordings",
    )
    parser.add_argument("--version", action="version", version=f"voxpath {__version__}")
    parser.add_argument("--config", help="run configuration TOML")
    parser.add_argument("--jobs", type=positive_int, help="worker processes")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit status."""
    args = build_parser().parse_args(argv)
    settings = get_settings()
    configure_logging(args.log_level or settings.log_level)
    audit = get_audit_service()
    jobs = args.jobs or settings.jobs

    try:
        config = load_run_config(args.config)
        audit.log_started(
            args.command,
            seed=getattr(args, "seed", None),
            details={"config": args.config, "jobs": jobs},
        )
        outputs = args.handler(args, config, jobs)
    except VoxpathError as e:
        logger.error(f"{e.category} error: {e}")
        audit.log_failed(args.command, e.category, str(e))
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure in {args.command}")
        audit.log_failed(args.command, "internal", str(e))
        return 1

    audit.log_finished(args.command, seed=getattr(args, "seed", None), outputs=outputs)
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
