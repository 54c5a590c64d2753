"""sigan stats: dataset ratio histograms and illumination probability map."""
import logging
from pathlib import Path

import numpy as np

from sigan.scene.store import SixTupleStore, compute_stats, per_sample_ratios, save_stats_figures, stats_to_dict
from sigan.scripts.common import CommandResult
from sigan.utils import DatasetError, jdump

__all__ = ['add_parser', 'run']

log = logging.getLogger(__name__)


def add_parser(subparsers):
    parser = subparsers.add_parser('stats', help='Compute dataset statistics',
                                   description='Object/shadow area ratio histograms and the illumination probability map.')
    parser.add_argument('dir', help='Dataset directory', metavar='DIR')
    parser.add_argument('--out', help='Output JSON file (CSV and PNG renderings are written next to it)',
                        required=True, metavar='FILE')
    parser.add_argument('--bins', help='Number of uniform histogram bins on [0, 1] (default: 20)', type=int,
                        default=20, metavar='N')
    parser.add_argument('--quiet', help='Be quiet', action='store_true')
    parser.set_defaults(run=run)
    return parser


def run(args):
    if args.bins < 1:
        return CommandResult(1, '--bins must be positive')
    store = SixTupleStore(args.dir)
    if not len(store):
        raise DatasetError(args.dir, 'dataset holds no samples')

    occluder_ratios = store.occluder_ratios()
    if occluder_ratios is None:
        log.info('Samples without scene parameters, skipping the occluder histogram')
    stats = compute_stats(iter(store), bins=np.linspace(0, 1, args.bins + 1), occluder_ratios=occluder_ratios)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    jdump(stats_to_dict(stats), out)
    per_sample_ratios(iter(store), occluder_ratios).to_csv(str(out.with_suffix('.csv')))
    written = save_stats_figures(stats, out.with_suffix(''))
    log.info('Wrote %s, %s and %s', out, out.with_suffix('.csv'), ', '.join(str(p) for p in written))
    return CommandResult.ok('Statistics of {} samples written to {}'.format(stats.n_samples, out))
