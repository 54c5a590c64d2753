"""sigan eval: score a checkpoint on dataset samples."""
import logging

from sigan.evaluate import evaluate
from sigan.model.checkpoint import load_checkpoint
from sigan.scene.store import SixTupleStore
from sigan.scripts.common import CommandResult, add_common_flags, resolve_seed
from sigan.scripts.train import build_config, training_ids

__all__ = ['add_parser', 'run', 'split_seed']

log = logging.getLogger(__name__)


def add_parser(subparsers):
    parser = subparsers.add_parser('eval', help='Evaluate a checkpoint',
                                   description='RMSE, SSIM and PSNR of relit vs ground truth, plus the composite baseline.')
    parser.add_argument('--data', help='Dataset directory', required=True, metavar='DIR')
    parser.add_argument('--ckpt', help='Checkpoint file', required=True, metavar='FILE')
    parser.add_argument('--out', help='Output directory for report.json, per_sample.csv and grids', required=True,
                        metavar='DIR')
    parser.add_argument('--config', help='Training configuration the checkpoint must match', metavar='FILE')
    parser.add_argument('--train-fraction', help='Evaluate the test side of the split with this fraction',
                        type=float, metavar='F')
    parser.add_argument('--grids', help='Write composite | relit | gt PNGs', action='store_true')
    add_common_flags(parser)
    parser.set_defaults(run=run)
    return parser


def split_seed(args, config=None):
    """Seed of the train/test split, resolved the way sigan train resolved it.

    Order: --seed, the --config file, the training configuration stored in the
    checkpoint, $SIGAN_SEED (or 0).
    """

    if config is not None:
        return config.seed
    if args.seed is not None:
        return int(args.seed)
    train_config = load_checkpoint(args.ckpt).header.get('train_config') or {}
    return resolve_seed(None, train_config.get('seed'))


def run(args):
    store = SixTupleStore(args.data)
    manifest = store.manifest
    config = None
    expected = None
    if args.config:
        config = build_config(args.config, manifest, seed=args.seed)
        expected = config.model_config()

    test_ids = None
    if args.train_fraction is not None:
        _, test_ids = training_ids(manifest, args.train_fraction, split_seed(args, config))
    report = evaluate(args.ckpt, args.data, test_ids=test_ids, out_dir=args.out, grids=args.grids,
                      expected_config=expected)
    return CommandResult.ok('Evaluated {} samples: rmse {:.5f} ssim {:.4f} psnr {:.3f} (baseline rmse {:.5f})'.format(
        len(report.per_sample), report.aggregate['rmse'], report.aggregate['ssim'], report.aggregate['psnr'],
        report.baseline['rmse']))
