import argparse

from ltplab.core.errors import UsageError
from ltplab.core.run_config import RunConfig, load_run_config


class CommandParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def add_run_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML experiment config (default: configs/default.toml)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key, e.g. soft.lambda=0.05")
    parser.add_argument("--output-dir", help="directory for every written artifact")
    parser.add_argument("--seed", type=int, help="seed for data, model and stages")


def load_config(args: argparse.Namespace) -> RunConfig:
    return load_run_config(args.config, args.overrides, args.output_dir, args.seed)
