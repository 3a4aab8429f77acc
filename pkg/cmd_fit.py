"""
cmd_fit.py - `fit` subcommand
=============================
Fit one hyperparameter configuration to a claim file.

Features:
✅ report.json, truths.csv, reliability.csv
✅ optional ELBO trace plot (--plot)
✅ top / bottom sources logged to standard error
✅ optional ground truth (--truth) adds per-source claim accuracy and truth accuracy
"""

import argparse
from pathlib import Path

from config_manager import config
from logger import mss_logger
from render import groups_table, plot_elbo_trace, ranking_table, summary_text
from storage import ReportStore, read_claims, read_labels
from system_inference import fit
from system_reporting import build_report, evaluate, source_claim_accuracy, top_bottom_sources


def setup_fit_command(subparsers):
    parser = subparsers.add_parser('fit', help='fit the model to a claim file')
    parser.add_argument('--claims', type=Path, required=True, help='claims (.csv or .json)')
    parser.add_argument('--domains', type=Path, help='JSON map object_id -> value labels')
    parser.add_argument('--out', type=Path, required=True, help='output directory')
    parser.add_argument('--plot', action='store_true', help='also write elbo_trace.png')
    parser.add_argument('--top', type=int, default=10, help='sources listed at each end of the ranking')
    parser.add_argument('--truth', type=Path, help='ground-truth labels scored against each source')
    config.add_model_arguments(parser)
    config.add_run_arguments(parser)
    parser.set_defaults(handler=run_fit)


def run_fit(args: argparse.Namespace) -> int:
    inputs = {'claims': args.claims}
    if args.domains is not None:
        inputs['domains'] = args.domains
    if args.truth is not None:
        inputs['truth'] = args.truth
    cfg = config.resolve(args, inputs)

    cs = read_claims(cfg.inputs['claims'], cfg.inputs.get('domains'))
    result = fit(cs, cfg.hyperparams, cfg.fit_options())
    report = build_report(result, cs)

    store = ReportStore(cfg.out_dir, cfg.provenance())
    store.write_report(report)
    if args.plot:
        plot_elbo_trace(result.elbo_trace, store.path('elbo_trace.png'), result.initial_elbo)

    record = {
        'out': str(cfg.out_dir),
        'elbo': result.elbo,
        'iterations': result.iterations,
        'converged': result.converged,
        'sources': cs.num_sources,
        'objects': cs.num_objects,
        'claims': cs.num_claims,
    }
    accuracy = None
    if 'truth' in cfg.inputs:
        truth = read_labels(cfg.inputs['truth'])
        accuracy = source_claim_accuracy(cs, truth)
        record['accuracy'] = evaluate(report.predictions(), truth).accuracy

    top, bottom = top_bottom_sources(report, args.top)
    mss_logger.info('🏆 most reliable sources\n' + ranking_table(top, accuracy=accuracy))
    mss_logger.info('🔻 least reliable sources\n' + ranking_table(bottom, accuracy=accuracy))
    mss_logger.debug('groups\n' + groups_table(report.groups))

    print(summary_text(record, cfg.output_format), end='')
    return 0
