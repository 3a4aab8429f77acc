"""
cmd_synth.py - `synth` subcommand
=================================
Sample a synthetic claim file plus its ground truth from the generative model.

Features:
✅ full generative process (stick-breaking groups, Beta reliabilities)
✅ planted groups (--planted 30:1,15:0,15:0)
✅ claims.csv, truth.json, truth.csv; byte-identical for a given seed
"""

import argparse
from pathlib import Path
from typing import List, Tuple

import numpy as np

from config_manager import config, positive_int
from render import summary_text
from storage import ReportStore
from system_sampler import SamplerError, sample_dataset, sample_planted_dataset


def setup_synth_command(subparsers):
    parser = subparsers.add_parser('synth', help='sample synthetic claims with ground truth')
    parser.add_argument('--sources', type=positive_int, default=50, help='number of sources N')
    parser.add_argument('--objects', type=positive_int, default=100, help='number of objects M')
    parser.add_argument('--domain-size', dest='domain_size', type=positive_int, default=3,
                        help='values per object K')
    parser.add_argument('--density', type=float, default=0.5, help='probability that a source claims an object')
    parser.add_argument('--planted', help='planted groups "size:reliable,..." (overrides --sources)')
    parser.add_argument('--out', type=Path, default=Path('.'), help='output directory')
    config.add_model_arguments(parser)
    config.add_run_arguments(parser)
    parser.set_defaults(handler=run_synth)


def parse_planted(text: str) -> List[Tuple[int, bool]]:
    """'30:1,15:0' -> [(30, True), (15, False)]."""
    groups = []
    for part in text.split(','):
        size, _, flag = part.strip().partition(':')
        try:
            groups.append((int(size), bool(int(flag or '1'))))
        except ValueError:
            raise SamplerError(f'bad planted group {part!r}; expected size:reliable')
    if not groups:
        raise SamplerError('no planted groups given')
    return groups


def run_synth(args: argparse.Namespace) -> int:
    extra = {
        'sources': args.sources,
        'objects': args.objects,
        'domain_size': args.domain_size,
        'density': args.density,
        'planted': args.planted,
    }
    cfg = config.resolve(args, extra=extra)
    rng = np.random.default_rng(cfg.seed)

    if args.planted:
        planted = parse_planted(args.planted)
        cs, truth = sample_planted_dataset(
            cfg.hyperparams,
            [size for size, _ in planted],
            [reliable for _, reliable in planted],
            args.objects,
            args.domain_size,
            args.density,
            rng,
        )
    else:
        cs, truth = sample_dataset(cfg.hyperparams, args.sources, args.objects, args.domain_size, args.density, rng)

    ReportStore(cfg.out_dir, cfg.provenance()).write_synthetic(cs, truth)
    print(summary_text({
        'out': str(cfg.out_dir),
        'sources': cs.num_sources,
        'objects': cs.num_objects,
        'claims': cs.num_claims,
        'groups': int(np.unique(truth.group_of_source).size),
    }, cfg.output_format), end='')
    return 0
