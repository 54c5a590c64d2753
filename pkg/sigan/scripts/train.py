"""sigan train: train the generator on a dataset directory."""
import logging
from pathlib import Path

from sigan.scene.store import SixTupleStore, split
from sigan.scripts.common import CommandResult, add_common_flags, resolve_seed
from sigan.train import TrainConfig, ablation_flags, fit, read_loss_log
from sigan.utils import ConfigurationError, jdump, jload

__all__ = ['add_parser', 'run', 'build_config', 'training_ids']

log = logging.getLogger(__name__)


def build_config(config_file=None, manifest=None, ablation=None, epochs=None, seed=None, batch_size=None):
    """TrainConfig from defaults, an optional JSON file and flag overrides.

    Image side and env map shape default to the dataset's when the file doesn't
    set them.
    """

    d = jload(config_file) if config_file else {}
    if not isinstance(d, dict):
        raise ConfigurationError('{}: configuration must be a JSON object'.format(config_file))
    d = dict(d)
    model = dict(d.get('model', {}))
    if manifest is not None:
        model.setdefault('image_side', manifest.image_side)
        model.setdefault('envmap_shape', list(manifest.envmap_shape))
    d['model'] = model
    d['seed'] = resolve_seed(seed, d.get('seed'))
    if ablation is not None:
        d['flags'] = ablation_flags(ablation)._asdict()
    if epochs is not None:
        d['epochs'] = epochs
    if batch_size is not None:
        d['batch_size'] = batch_size
    try:
        return TrainConfig.from_dict(d).validate()
    except TypeError as e:
        raise ConfigurationError('invalid training configuration ({})'.format(e))


def training_ids(manifest, train_fraction, seed):
    """All ids, or the training side of a split."""

    if train_fraction is None:
        return None, None
    return split(manifest, train_fraction, seed)


def add_parser(subparsers):
    parser = subparsers.add_parser('train', help='Train the relighting generator',
                                   description='Adversarial training; writes checkpoints and loss_log.jsonl to --out.')
    parser.add_argument('--data', help='Dataset directory', required=True, metavar='DIR')
    parser.add_argument('--config', help='JSON file mirroring TrainConfig (nested "model", "weights", "flags")',
                        metavar='FILE')
    parser.add_argument('--out', help='Output directory', required=True, metavar='DIR')
    parser.add_argument('--ablation', help='Ablation row (name or index 0-9, e.g. basic, full)', metavar='ROW')
    parser.add_argument('--epochs', help='Override number of epochs', type=int, metavar='N')
    parser.add_argument('--batch-size', help='Override batch size', type=int, metavar='N')
    parser.add_argument('--train-fraction', help='Train on a split of the dataset with this fraction', type=float,
                        metavar='F')
    parser.add_argument('--resume', help='Checkpoint to resume from', metavar='FILE')
    add_common_flags(parser)
    parser.set_defaults(run=run)
    return parser


def run(args):
    store = SixTupleStore(args.data)
    manifest = store.manifest
    config = build_config(args.config, manifest, args.ablation, args.epochs, args.seed, args.batch_size)

    train_ids, test_ids = training_ids(manifest, args.train_fraction, config.seed)
    if train_ids is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        jdump({'train': train_ids, 'test': test_ids, 'train_fraction': args.train_fraction, 'seed': config.seed},
              Path(args.out).joinpath('split.json'))

    final = fit(config, args.data, args.out, resume=args.resume, train_ids=train_ids, quiet=args.quiet)
    losses = read_loss_log(Path(args.out).joinpath('loss_log.jsonl'))
    return CommandResult.ok('Trained {} steps ({}), final l_total {:.5f}, checkpoint {}'.format(
        len(losses), config.flags.label(), float(losses['l_total'].iloc[-1]), final))
