import argparse
import sys

from loguru import logger

from fcmvc import __version__
from fcmvc.commands import bench, corrupt, resume, run, synth
from fcmvc.commands import eval as eval_command
from fcmvc.errors import FcmvcError
from fcmvc.services.config import configure_logging

COMMANDS = (synth, corrupt, run, resume, eval_command, bench)


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcmvc",
        description="Continual clustering of incomplete multi-view data",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ... (default: $FCMVC_LOG_LEVEL or INFO)")
    parser.add_argument("--log-json", action="store_true", help="Emit log records as JSON lines on stderr")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv=None) -> int:
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0 if e.code is None else 2

    configure_logging(args.log_level, serialize=args.log_json)
    try:
        return args.handler(args)
    except FcmvcError as e:
        logger.bind(command=args.command, error_kind=type(e).__name__, exit_code=e.exit_code).error(str(e))
        return e.exit_code
    except KeyboardInterrupt:
        logger.bind(command=args.command).warning("interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
