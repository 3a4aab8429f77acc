"""
cmd_grid.py - `grid` subcommand
===============================
Grid search over hyperparameters; the winning fit is reported like `fit`.
"""

import argparse
import dataclasses
import json
from pathlib import Path
from typing import Optional

from config_manager import ConfigError, config
from logger import mss_logger
from render import leaderboard_table, summary_text
from storage import ReportStore, read_claims, read_text
from system_reporting import build_report
from system_selection import GridSpec, grid_search


def setup_grid_command(subparsers):
    parser = subparsers.add_parser('grid', help='select hyperparameters by maximum ELBO')
    parser.add_argument('--claims', type=Path, required=True, help='claims (.csv or .json)')
    parser.add_argument('--domains', type=Path, help='JSON map object_id -> value labels')
    parser.add_argument('--out', type=Path, required=True, help='output directory')
    parser.add_argument('--grid', type=Path, help='JSON grid file (default: the standard grid)')
    config.add_model_arguments(parser)
    config.add_run_arguments(parser)
    parser.set_defaults(handler=run_grid)


def load_grid(path: Optional[str], restarts: int) -> GridSpec:
    if path is None:
        return GridSpec.standard(restarts)
    try:
        data = json.loads(read_text(path))
    except json.JSONDecodeError as e:
        raise ConfigError(f'grid file {path}: {e.msg} (line {e.lineno})') from e
    if not isinstance(data, dict):
        raise ConfigError(f'grid file {path} must hold a JSON object')
    data.setdefault('restarts_per_config', restarts)
    return GridSpec.from_dict(data)


def run_grid(args: argparse.Namespace) -> int:
    inputs = {'claims': args.claims}
    if args.domains is not None:
        inputs['domains'] = args.domains
    if args.grid is not None:
        inputs['grid'] = args.grid
    cfg = config.resolve(args, inputs, check_regimes=False)

    grid = load_grid(cfg.inputs.get('grid'), cfg.restarts)
    if args.restarts is not None:
        grid = dataclasses.replace(grid, restarts_per_config=args.restarts)
    cfg = dataclasses.replace(cfg, extra={'grid': grid.to_dict()})

    cs = read_claims(cfg.inputs['claims'], cfg.inputs.get('domains'))
    search = grid_search(cs, grid, cfg.search_options(), truncation=cfg.hyperparams.truncation)

    table_text = leaderboard_table(search.ranked())
    store = ReportStore(cfg.out_dir, cfg.provenance())
    store.write_leaderboard(search, table_text)
    store.write_report(build_report(search.best_fit, cs))
    mss_logger.info('🏁 leaderboard (top 10)\n' + leaderboard_table(search.ranked(), limit=10))

    print(summary_text({
        'out': str(cfg.out_dir),
        'configurations': len(search.leaderboard),
        'failed': sum(1 for e in search.leaderboard if not e.ok),
        'best': search.best.label(),
        'elbo': search.best_fit.elbo,
    }, cfg.output_format), end='')
    return 0
