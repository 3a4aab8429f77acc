"""
cmd_sweep.py - `sweep` subcommand
=================================
Accuracy as a function of κ with all other hyperparameters fixed.
"""

import argparse
from pathlib import Path

from config_manager import config
from helpers import parse_float_list
from render import plot_kappa_sweep, summary_text
from storage import ReportStore, read_claims, read_labels
from system_selection import SelectionError, sweep_kappa

DEFAULT_KAPPAS = '0.1,0.5,1,2,5,10,20,50,100'


def setup_sweep_command(subparsers):
    parser = subparsers.add_parser('sweep', help='truth-discovery accuracy versus kappa')
    parser.add_argument('--claims', type=Path, required=True, help='claims (.csv or .json)')
    parser.add_argument('--domains', type=Path, help='JSON map object_id -> value labels')
    parser.add_argument('--truth', type=Path, required=True, help='ground-truth labels')
    parser.add_argument('--kappas', default=DEFAULT_KAPPAS, help='comma separated kappa values')
    parser.add_argument('--out', type=Path, required=True, help='output directory')
    config.add_model_arguments(parser)
    config.add_run_arguments(parser)
    parser.set_defaults(handler=run_sweep)


def run_sweep(args: argparse.Namespace) -> int:
    try:
        kappas = parse_float_list(args.kappas)
    except ValueError as e:
        raise SelectionError(f'bad --kappas value: {e}') from e
    if not kappas or any(k <= 0 for k in kappas):
        raise SelectionError('--kappas needs positive values')

    inputs = {'claims': args.claims, 'truth': args.truth}
    if args.domains is not None:
        inputs['domains'] = args.domains
    cfg = config.resolve(args, inputs, extra={'kappas': kappas})

    cs = read_claims(cfg.inputs['claims'], cfg.inputs.get('domains'))
    truth = read_labels(cfg.inputs['truth'])
    points = sweep_kappa(cs, cfg.hyperparams, kappas, truth, cfg.search_options())

    store = ReportStore(cfg.out_dir, cfg.provenance())
    store.write_kappa_sweep(points)
    plot_kappa_sweep(points, store.path('kappa_sweep.png'))

    best = max(points, key=lambda p: (p.accuracy, -p.kappa))
    print(summary_text({
        'out': str(cfg.out_dir),
        'best_kappa': best.kappa,
        'best_accuracy': best.accuracy,
        'points': len(points),
    }, cfg.output_format), end='')
    return 0
