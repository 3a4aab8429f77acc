"""
cmd_eval.py - `eval` subcommand
===============================
Score predicted labels against ground truth. Repeat --pred/--truth pairs to
macro-average over several runs or tags; --claims adds the voting baseline.
"""

import argparse
from pathlib import Path

from config_manager import config
from logger import mss_logger
from render import summary_text
from storage import read_claims, read_labels
from system_reporting import EvaluationError, evaluate, macro_average, voting_baseline


def setup_eval_command(subparsers):
    parser = subparsers.add_parser('eval', help='accuracy / precision / recall of predictions')
    parser.add_argument('--pred', type=Path, action='append', required=True, help='predicted labels (truths.csv)')
    parser.add_argument('--truth', type=Path, action='append', required=True, help='ground-truth labels')
    parser.add_argument('--positive-label', dest='positive_label', help='label scored for binary domains')
    parser.add_argument('--claims', type=Path, action='append',
                        help='claim file per pair; adds the voting baseline')
    parser.add_argument('--format', dest='output_format', choices=('json', 'csv'), default='json',
                        help='format of the summary printed on standard output')
    parser.set_defaults(handler=run_eval)


def run_eval(args: argparse.Namespace) -> int:
    if len(args.pred) != len(args.truth):
        raise EvaluationError('--pred and --truth must be given the same number of times')
    if args.claims and len(args.claims) != len(args.pred):
        raise EvaluationError('--claims must be given once per --pred/--truth pair')

    results, baselines = [], []
    for position, (pred_path, truth_path) in enumerate(zip(args.pred, args.truth)):
        predictions = read_labels(config.validate_input(pred_path, 'predictions'))
        truth = read_labels(config.validate_input(truth_path, 'ground truth'))
        result = evaluate(predictions, truth, args.positive_label)
        mss_logger.info(f'📏 {pred_path.name}: accuracy={result.accuracy:.4f} over {result.covered} objects')
        results.append(result)
        if args.claims:
            cs = read_claims(config.validate_input(args.claims[position], 'claims'))
            votes = {v.object_id: v.label for v in voting_baseline(cs)}
            baselines.append(evaluate(votes, truth, args.positive_label))

    if len(results) == 1 and args.output_format == 'json':
        summary = results[0].to_dict()
        if baselines:
            summary['voting'] = baselines[0].to_dict()
    else:
        summary = macro_average(results)
        if baselines:
            summary['voting_accuracy'] = macro_average(baselines)['accuracy']
        if len(results) == 1:
            summary.pop('runs')

    print(summary_text(summary if args.output_format == 'json' else _flat(summary), args.output_format), end='')
    return 0


def _flat(summary: dict) -> dict:
    """Scalar fields only, for the CSV summary."""
    return {k: v for k, v in summary.items() if not isinstance(v, dict)}
