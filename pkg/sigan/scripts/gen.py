"""sigan gen: render a procedural six-tuple dataset."""
import logging
import multiprocessing as mp
from pathlib import Path

from progress.bar import Bar

from sigan.core import DEFAULT_ENVMAP_SHAPE, TEST_SIDE, validate_six_tuple
from sigan.scene.render import cast_shadow_mask, render_six_tuple, sample_spec, sample_spec_pair
from sigan.scene.store import MANIFEST_VERSION, DatasetManifest, write_manifest, write_sample
from sigan.scripts.common import EXIT_USAGE, CommandResult, add_common_flags, parse_shape, resolve_seed
from sigan.utils import DatasetError, GenerationError, derive_seed, digest, init_parameters, init_worker, worker_parameters

__all__ = ['add_parser', 'run', 'sample_ids', 'generate']

log = logging.getLogger(__name__)


def sample_ids(count, paired):
    """Sample ids in manifest order."""

    if paired:
        ids = []
        for ix in range(count):
            ids += ['pair_{:05d}_a'.format(ix), 'pair_{:05d}_b'.format(ix)]
        return ids
    return ['sample_{:05d}'.format(ix) for ix in range(count)]


def _checked(t, spec):
    violations = validate_six_tuple(t, cast_shadow_mask(spec, spec.scene_light))
    if violations:
        raise GenerationError('{}: {}'.format(t.sample_id, '; '.join(violations)))
    return t


def render_index(ix):
    """Renders and writes the sample(s) of one index (pool worker)."""

    params = worker_parameters()
    seed = derive_seed(params['seed'], 'sample', ix)
    if params['paired']:
        specs = sample_spec_pair(seed, params['side'], params['envmap_shape'])
        ids = ['pair_{:05d}_a'.format(ix), 'pair_{:05d}_b'.format(ix)]
    else:
        specs = (sample_spec(seed, params['side'], params['envmap_shape']),)
        ids = ['sample_{:05d}'.format(ix)]
    for sample_id, spec in zip(ids, specs):
        t = _checked(render_six_tuple(spec, sample_id), spec)
        write_sample(params['out'], t, spec)
    return ids


def generate(out, count, seed, side=TEST_SIDE, paired=False, envmap_shape=DEFAULT_ENVMAP_SHAPE,
             nworkers=1, quiet=False):
    """Renders a dataset directory.

    Returns:
        DatasetManifest
    """

    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        marker = out.joinpath('.write_test')
        marker.write_bytes(b'')
        marker.unlink()
    except OSError as e:
        raise DatasetError(out, 'directory is not writable ({})'.format(e))

    params = init_parameters(out=str(out), seed=int(seed), side=int(side), paired=bool(paired),
                             envmap_shape=tuple(envmap_shape))
    log.info('Rendering %s %s at side %s into %s', count, 'pairs' if paired else 'samples', side, out)

    bar = None if quiet else Bar('Rendering', max=count)
    if nworkers > 1:
        with mp.Pool(processes=nworkers, initializer=init_worker, initargs=(params,)) as pool:
            for _ in pool.imap(render_index, range(count)):
                if bar is not None:
                    bar.next()
    else:
        init_worker(params)
        for ix in range(count):
            render_index(ix)
            if bar is not None:
                bar.next()
    if bar is not None:
        bar.finish()

    ids = sample_ids(count, paired)
    pair_map = None
    if paired:
        pair_map = {}
        for a, b in zip(ids[0::2], ids[1::2]):
            pair_map[a] = b
            pair_map[b] = a

    manifest = DatasetManifest(version=MANIFEST_VERSION, sample_ids=ids, image_side=int(side),
                               envmap_shape=tuple(envmap_shape),
                               generator_config_digest=digest({'count': count, 'seed': int(seed), 'side': int(side),
                                                               'paired': bool(paired),
                                                               'envmap_shape': list(envmap_shape)}),
                               pair_map=pair_map)
    write_manifest(out, manifest)
    return manifest


def add_parser(subparsers):
    parser = subparsers.add_parser('gen', help='Render a procedural six-tuple dataset',
                                   description='Render N procedural six-tuples (2N with --paired) and a manifest.')
    parser.add_argument('--count', help='Number of samples (pairs with --paired)', type=int, required=True, metavar='N')
    parser.add_argument('--side', help='Image side in pixels, multiple of 32 (default: {})'.format(TEST_SIDE),
                        type=int, default=TEST_SIDE, metavar='PX')
    parser.add_argument('--paired', help='Render each scene under two object illuminations', action='store_true')
    parser.add_argument('--envmap-shape', help='Env map shape HxW (default: 16x32)', type=parse_shape,
                        default=DEFAULT_ENVMAP_SHAPE, metavar='HxW')
    parser.add_argument('--nworkers', help='Number of rendering processes (default: 1)', type=int, default=1, metavar='N')
    parser.add_argument('--out', help='Output dataset directory', required=True, metavar='DIR')
    add_common_flags(parser)
    parser.set_defaults(run=run)
    return parser


def run(args):
    if args.count < 1:
        return CommandResult(EXIT_USAGE, '--count must be positive')
    if args.side <= 0 or args.side % 32:
        return CommandResult(EXIT_USAGE, '--side must be a positive multiple of 32, got {}'.format(args.side))
    h_e, w_e = args.envmap_shape
    if h_e < 1 or w_e != 2 * h_e:
        return CommandResult(EXIT_USAGE, '--envmap-shape must be Hx2H, got {}x{}'.format(h_e, w_e))
    manifest = generate(args.out, args.count, resolve_seed(args.seed), args.side, args.paired,
                        args.envmap_shape, max(1, args.nworkers), args.quiet)
    return CommandResult.ok('Wrote {} samples to {}'.format(len(manifest.sample_ids), args.out))
