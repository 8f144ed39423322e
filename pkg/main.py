#!/usr/bin/env python3
"""
Command line front-end for multiplicative spherical integral experiments

Usage:
    python main.py rate --config rate.json
    python main.py mc --config mc.json --seed 7 --out mc.csv
    python main.py --log-level DEBUG asymmetry --config spike.json

Logs go to stderr; tables (CSV) or reports (JSON) go to --out or stdout.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from config import CLI_CONFIG, LOG_FORMAT, LOG_LEVEL, RESULTS_DIR
from errors import (ConfigError, ConvergenceError, DegenerateEigsError, DomainError, IdentityError, NotPDError,
                    QuadratureError, SeedError)
from experiments import (CONFIG_TYPES, run_asymmetry, run_converge, run_mc, run_rate, run_transforms,
                         run_variational)
from rate import RateResult

logger = logging.getLogger(__name__)

EXIT = CLI_CONFIG["exit_codes"]
ESTIMATOR_ERRORS = (NotPDError, ConvergenceError, QuadratureError, IdentityError, SeedError,
                    DegenerateEigsError, OverflowError)

RUNNERS = {
    "transforms": run_transforms,
    "rate": run_rate,
    "variational": run_variational,
    "mc": run_mc,
    "converge": run_converge,
    "asymmetry": run_asymmetry,
}


def write_results(result: Union[pd.DataFrame, Dict[str, Any], RateResult], out: Optional[str] = None):
    """CSV for tables, JSON for reports; a RateResult goes to JSON when --out ends in .json"""
    path = None
    if out:
        path = Path(out)
        if not path.is_absolute():
            path = RESULTS_DIR / path
        path.parent.mkdir(parents=True, exist_ok=True)

    if isinstance(result, RateResult):
        if path is not None and path.suffix == ".json":
            result = result.to_dict()
        else:
            result = result.to_frame()

    if isinstance(result, pd.DataFrame):
        text = result.to_csv(index=False)
    else:
        text = json.dumps(result, indent=2) + "\n"

    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")
        logger.info(f"Results written to {path}")


def run_command(command: str, config_path: str, seed: Optional[int] = None, out: Optional[str] = None) -> int:
    """Run one subcommand and map failures to exit codes"""
    try:
        cfg = CONFIG_TYPES[command].load(config_path)
        if seed is not None:
            if not hasattr(cfg, "seed"):
                raise ConfigError(f"'{command}' takes no seed")
            cfg.seed = seed
        result = RUNNERS[command](cfg)
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        return EXIT["config"]
    except DomainError as e:
        logger.error(f"Domain error: {e}")
        return EXIT["domain"]
    except ESTIMATOR_ERRORS as e:
        logger.error(f"{command} failed: {type(e).__name__}: {e}")
        return EXIT["estimator"]

    write_results(result, out)

    if command == "asymmetry" and not result["is_spike"]:
        logger.error("The outlier sits on the bulk edge; (b) and (c) coincide and the demo is vacuous")
        return EXIT["domain"]
    return EXIT["ok"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Multiplicative spherical integrals: rate functions and Monte Carlo")
    parser.add_argument("--log-level", default=LOG_LEVEL, choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Logging verbosity (stderr)")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in CLI_CONFIG["commands"]:
        sub = subparsers.add_parser(command)
        sub.add_argument("--config", required=True, help="Path to the JSON experiment config")
        sub.add_argument("--out", default=None, help="Output file (CSV or JSON); stdout when omitted")
        sub.add_argument("--seed", type=int, default=None, help="Overrides the seed in the config")
    return parser


def main(argv=None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    return run_command(args.command, args.config, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
