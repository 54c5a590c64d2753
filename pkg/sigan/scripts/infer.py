"""sigan infer: relight a single composite."""
import logging
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from sigan.core import SixTuple, freeze
from sigan.evaluate import load_generator, relight
from sigan.scripts.common import CommandResult
from sigan.utils import MalformedSidecarError, MissingFileError, ShapeMismatchError, jdump

__all__ = ['add_parser', 'run', 'read_inputs']

log = logging.getLogger(__name__)


def _read_png(path, mode):
    path = Path(path)
    if not path.exists():
        raise MissingFileError(path, 'file not found')
    try:
        with PILImage.open(str(path)) as img:
            return np.asarray(img.convert(mode))
    except OSError as e:
        raise MalformedSidecarError(path, 'unreadable image ({})'.format(e))


def read_inputs(composite, object_mask, background_mask, side, envmap_shape):
    """Builds an input-only SixTuple from image files.

    Env map and ground-truth slots are zero placeholders.

    Raises:
        ShapeMismatchError: image size differs from the model side
    """

    arrays = {}
    for key, path, mode in (('composite', composite, 'RGB'), ('object_mask', object_mask, 'L'),
                            ('background_mask', background_mask, 'L')):
        arr = _read_png(path, mode)
        if arr.shape[:2] != (side, side):
            raise ShapeMismatchError(path, 'image size {} does not match model side {}'.format(arr.shape[:2], side))
        if mode == 'RGB':
            arrays[key] = freeze(arr.transpose(2, 0, 1).astype(np.float32) / np.float32(255))
        else:
            arrays[key] = freeze(arr > 127)

    empty_env = freeze(np.zeros((3,) + tuple(envmap_shape)))
    return SixTuple(composite=arrays['composite'], object_mask=arrays['object_mask'],
                    background_mask=arrays['background_mask'], object_illum=empty_env,
                    background_illum=empty_env, gt_harmonized=arrays['composite'],
                    sample_id=Path(composite).stem)


def add_parser(subparsers):
    parser = subparsers.add_parser('infer', help='Relight one composite image',
                                   description='Writes the relit PNG and the two predicted env maps '
                                               '(<out>_obj_illum.f32, <out>_bg_illum.f32, <out>_illum.json).')
    parser.add_argument('--composite', help='Composite PNG', required=True, metavar='PNG')
    parser.add_argument('--object-mask', help='Object mask PNG', required=True, metavar='PNG')
    parser.add_argument('--background-mask', help='Background mask PNG', required=True, metavar='PNG')
    parser.add_argument('--ckpt', help='Checkpoint file', required=True, metavar='FILE')
    parser.add_argument('--out', help='Output PNG', required=True, metavar='PNG')
    parser.add_argument('--quiet', help='Be quiet', action='store_true')
    parser.set_defaults(run=run)
    return parser


def run(args):
    generator, _ = load_generator(args.ckpt)
    config = generator.config
    t = read_inputs(args.composite, args.object_mask, args.background_mask, config.image_side, config.envmap_shape)
    relit, obj_illum, bg_illum = relight(generator, [t])[0]

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    img = np.round(np.clip(relit, 0, 1) * 255).astype(np.uint8).transpose(1, 2, 0)
    PILImage.fromarray(img).save(str(out), format='PNG')

    stem = out.with_suffix('')
    obj_path = stem.with_name(stem.name + '_obj_illum.f32')
    bg_path = stem.with_name(stem.name + '_bg_illum.f32')
    obj_path.write_bytes(np.ascontiguousarray(obj_illum, dtype='<f4').tobytes())
    bg_path.write_bytes(np.ascontiguousarray(bg_illum, dtype='<f4').tobytes())
    jdump({'obj_illum': obj_path.name, 'bg_illum': bg_path.name, 'shape': list(obj_illum.shape)},
          stem.with_name(stem.name + '_illum.json'))
    return CommandResult.ok('Wrote {}'.format(out))
