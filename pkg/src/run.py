# run.py
import argparse
import logging
import sys
from dataclasses import fields
from typing import Optional, Sequence

from core.application import Application, build_stage_manager
from core.config import Config, RunConfig
from core.errors import DialopreError, UsageError
from utils.logger import setup_logging

logger = logging.getLogger(__name__)

CONFIG_PREFIX = "cfg_"


class ArgumentParser(argparse.ArgumentParser):
    """argparse that reports usage problems as UsageError (exit 1)"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_config_flags(parser: argparse.ArgumentParser):
    """One --flag per RunConfig key; a stage flag of the same name wins"""
    group = parser.add_argument_group("run config overrides")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        try:
            group.add_argument(flag, dest=CONFIG_PREFIX + f.name, default=None, metavar=f.name.upper())
        except argparse.ArgumentError:
            continue


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="dialopre", description="multilingual dialog pretraining toolkit")
    parser.add_argument("--config", default=None, help="flat TOML run config")

    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, stage_cls in build_stage_manager().items():
        sub = subparsers.add_parser(name, help=stage_cls.help, description=stage_cls.help)
        stage_cls.add_arguments(sub)
        _add_config_flags(sub)

    replay = subparsers.add_parser("replay", help="re-run a stage from its manifest and verify its outputs")
    replay.add_argument("--manifest", required=True, help="path to a <stage>[.<task>.<split or scorer>].manifest.json")
    replay.add_argument("--log-level", dest=CONFIG_PREFIX + "log_level", default=None)
    return parser


def split_args(args: argparse.Namespace) -> tuple[dict, dict]:
    """(config overrides, stage options) from the parsed namespace"""
    overrides, options = {}, {}
    for key, value in vars(args).items():
        if key in ("command", "config", "manifest"):
            continue
        if key.startswith(CONFIG_PREFIX):
            overrides[key.removeprefix(CONFIG_PREFIX)] = value
        else:
            options[key] = value
    return overrides, options


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides, options = split_args(args)

        if args.command == "replay":
            setup_logging(level=overrides.get("log_level") or "INFO")
            Application.replay(args.manifest)
            return 0

        config = Config(args.config).resolve(overrides)
        setup_logging(level=config.log_level, log_format=config.log_format, log_file=config.log_file or None)

        Application(config).run_stage(args.command, options)
        return 0
    except DialopreError as e:
        logger.error(str(e))
        return e.exit_code
    except ArithmeticError as e:
        logger.error(f"numeric failure: {e}")
        return 3
    except (OSError, ValueError) as e:
        logger.error(f"data error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
