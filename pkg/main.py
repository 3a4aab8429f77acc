"""
main.py - Command Line Entry Point
==================================
    python main.py fit   --claims claims.csv --out results/
    python main.py grid  --claims claims.csv --out results/ --threads 8
    python main.py synth --sources 50 --objects 100 --kappa 5 --seed 7 --out data/
    python main.py eval  --pred results/truths.csv --truth data/truth.csv
    python main.py sweep --claims data/claims.csv --truth data/truth.csv --out sweep/

Exit codes:
    0  success
    1  data / configuration error, or an unexpected failure
    2  usage error
    3  numerical failure (non-finite ELBO)

Progress goes to standard error; standard output carries one summary record.
"""

import argparse
import sys
from typing import Optional, Sequence

from dotenv import load_dotenv

load_dotenv()

from cmd_eval import setup_eval_command  # noqa: E402
from cmd_fit import setup_fit_command  # noqa: E402
from cmd_grid import setup_grid_command  # noqa: E402
from cmd_sweep import setup_sweep_command  # noqa: E402
from cmd_synth import setup_synth_command  # noqa: E402
from helpers import MSSError  # noqa: E402
from logger import mss_logger  # noqa: E402
from system_inference import NumericalError  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='mss',
        description='Truth discovery with latent source groups and two-level reliability.',
    )
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    subparsers.required = True

    setup_fit_command(subparsers)
    setup_grid_command(subparsers)
    setup_synth_command(subparsers)
    setup_eval_command(subparsers)
    setup_sweep_command(subparsers)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run the subcommand and map failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else (0 if e.code is None else 2)

    try:
        return args.handler(args)
    except NumericalError as e:
        mss_logger.error(f'numerical failure: {e}')
        for name, value in e.terms.items():
            mss_logger.error(f'  {name} = {value!r}')
        return e.exit_code
    except MSSError as e:
        mss_logger.error(str(e))
        return e.exit_code
    except KeyboardInterrupt:
        mss_logger.warning('interrupted')
        return 130
    except Exception as e:
        mss_logger.exception('unexpected failure', e)
        return 1


if __name__ == '__main__':
    sys.exit(run())
