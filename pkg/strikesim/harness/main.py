"""
strikesim command-line entry point

    strikesim [--config PATH] [--seed N] [--out DIR] [--jobs N] <command>

Commands: generate, fit, benchmark, diagnose, sweep. Exit codes: 0 on
success, 2 for configuration or usage errors, 3 for runtime failures.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from strikesim.config.settings import load_experiment_spec
from strikesim.harness.experiments import COMMANDS
from strikesim.utils.validation import ConfigError, StrikeSimError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strikesim", description="Anticipatory strike-point benchmark toolkit")
    parser.add_argument("--config", help="Experiment spec (TOML or JSON)")
    parser.add_argument("--seed", type=int, help="Experiment seed (u64)")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--jobs", type=int, help="Worker processes")
    parser.add_argument("--log-level", default=None, help="Logging level (default INFO)")
    parser.add_argument("command", choices=sorted(COMMANDS))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG

    level = args.log_level or os.getenv("STRIKESIM_LOG_LEVEL", "INFO")
    logging.basicConfig(level=level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        spec = load_experiment_spec(args.config, seed=args.seed, output_dir=args.out, jobs=args.jobs)
        logger.info(f"Running {args.command} (seed={spec.seed}, out={spec.output_dir}, jobs={spec.jobs})")
        COMMANDS[args.command](spec)
    except (ConfigError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except StrikeSimError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME
    logger.info(f"{args.command} finished")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
