"""
Image quality metrics and checkpoint evaluation.

RMSE, PSNR (peak 1.0, infinite for identical images) and SSIM (11x11 Gaussian
window, sigma 1.5, K1 0.01, K2 0.03, valid windows only, mean over windows and
channels), all computed on the whole image in float64.
"""
import logging
import math
from pathlib import Path
from typing import Any, Dict, NamedTuple

import numpy as np
import pandas as pd
from PIL import Image as PILImage
import torch
import torch.nn.functional as F

from sigan.core import ModelConfig, freeze
from sigan.model.batch import collate
from sigan.model.checkpoint import data_digest, load_checkpoint, restore_module
from sigan.model.generator import Generator
from sigan.scene.store import SixTupleStore
from sigan.utils import CheckpointMismatchError, ContractError, jdump

__all__ = [
    'SSIM_WINDOW',
    'SSIM_SIGMA',
    'MetricReport',
    'rmse',
    'psnr',
    'gaussian_window',
    'ssim',
    'score_images',
    'load_generator',
    'relight',
    'evaluate',
    'save_grid',
]

log = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
METRICS = ('rmse', 'ssim', 'psnr')
REGION = 'whole_image'


class MetricReport(NamedTuple):
    """Evaluation result of a checkpoint on a set of samples."""
    config_digest: str
    per_sample: pd.DataFrame
    aggregate: Dict[str, Any]
    baseline: Dict[str, Any]
    region: str = REGION

    def to_dict(self):
        records = []
        for sample_id, row in self.per_sample.iterrows():
            record = {'sample_id': sample_id}
            record.update({k: _json_float(v) for k, v in row.items()})
            records.append(record)
        return {'config_digest': self.config_digest,
                'region': self.region,
                'per_sample': records,
                'aggregate': {k: _json_float(v) for k, v in self.aggregate.items()},
                'baseline': {k: _json_float(v) for k, v in self.baseline.items()}}


def _json_float(value):
    value = float(value)
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return value


def _as_array(img):
    if torch.is_tensor(img):
        img = img.detach().cpu().numpy()
    return np.asarray(img, dtype=np.float64)


def _pair(a, b):
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ContractError('image shapes differ: {} vs {}'.format(a.shape, b.shape))
    return a, b


def rmse(a, b):
    """Root mean squared difference over all pixels and channels."""

    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr(a, b, max_value=1.0):
    """Peak signal to noise ratio in dB; inf for identical images."""

    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(max_value ** 2 / mse)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """Normalised 1D Gaussian kernel (float64 tensor)."""

    x = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    kernel = torch.exp(-x ** 2 / (2 * sigma ** 2))
    return kernel / kernel.sum()


def _filter(x, kernel):
    """Separable valid filtering of a (N, C, H, W) tensor."""

    channels = x.shape[1]
    size = kernel.numel()
    kx = kernel.view(1, 1, 1, size).expand(channels, 1, 1, size)
    ky = kernel.view(1, 1, size, 1).expand(channels, 1, size, 1)
    return F.conv2d(F.conv2d(x, kx, groups=channels), ky, groups=channels)


def ssim(a, b, max_value=1.0):
    """Windowed structural similarity of two images (C, H, W).

    Raises:
        ContractError: shapes differ or the image is smaller than the window
    """

    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise ContractError('ssim needs images of at least {0}x{0}, got {1}'.format(SSIM_WINDOW, a.shape[-2:]))

    x = torch.from_numpy(a)[None]
    y = torch.from_numpy(b)[None]
    kernel = gaussian_window()
    c1 = (SSIM_K1 * max_value) ** 2
    c2 = (SSIM_K2 * max_value) ** 2

    mu_x = _filter(x, kernel)
    mu_y = _filter(y, kernel)
    sigma_x = _filter(x * x, kernel) - mu_x ** 2
    sigma_y = _filter(y * y, kernel) - mu_y ** 2
    sigma_xy = _filter(x * y, kernel) - mu_x * mu_y

    cs = (2 * sigma_xy + c2) / (sigma_x + sigma_y + c2)
    lum = (2 * mu_x * mu_y + c1) / (mu_x ** 2 + mu_y ** 2 + c1)
    return float((lum * cs).mean().item())


def score_images(a, b):
    """rmse, ssim and psnr of one image pair."""

    return {'rmse': rmse(a, b), 'ssim': ssim(a, b), 'psnr': psnr(a, b)}


def load_generator(path, expected_config=None, expected_data=None):
    """Builds a generator in inference mode from a checkpoint.

    Args:
        path: checkpoint file
        expected_config: ModelConfig the checkpoint must have been trained with
        expected_data: (image_side, envmap_shape) of the data to be processed

    Returns:
        (Generator, Checkpoint)

    Raises:
        CheckpointMismatchError: digests differ
    """

    ckpt = load_checkpoint(path)
    if expected_config is not None and expected_config.digest() != ckpt.header['config_digest']:
        raise CheckpointMismatchError(path, 'config digest {} does not match expected digest {}'.format(
            ckpt.header['config_digest'], expected_config.digest()))
    if expected_data is not None:
        wanted = data_digest(*expected_data)
        stored = ckpt.header.get('data_digest')
        if stored is not None and stored != wanted:
            raise CheckpointMismatchError(path, 'data digest {} does not match dataset digest {} (side {}, envmap {})'.format(
                stored, wanted, expected_data[0], tuple(expected_data[1])))
        config = ckpt.model_config
        if config.image_side != expected_data[0] or tuple(config.envmap_shape) != tuple(expected_data[1]):
            raise CheckpointMismatchError(path, 'model config digest {} was built for side {}, data has side {}'.format(
                ckpt.header['config_digest'], config.image_side, expected_data[0]))

    generator = Generator(ModelConfig.from_dict(ckpt.header['model_config']), seed=ckpt.header.get('seed', 0))
    restore_module(generator, ckpt.generator, path)
    generator.eval()
    return generator, ckpt


def relight(generator, tuples):
    """Runs the generator in inference mode.

    Args:
        generator: Generator
        tuples: list of SixTuple (only inputs are used)

    Returns:
        list of (relit Image, object EnvMap, background EnvMap) numpy triples
    """

    batch = collate(tuples)
    generator.eval()
    with torch.no_grad():
        out = generator(batch.composite, batch.object_mask, batch.background_mask)
    return [(freeze(out.relit[i].numpy()), freeze(out.obj_illum_pred[i].numpy()), freeze(out.bg_illum_pred[i].numpy()))
            for i in range(len(tuples))]


def _to_uint8(img):
    return np.round(np.clip(_as_array(img), 0, 1) * 255).astype(np.uint8).transpose(1, 2, 0)


def save_grid(path, composite, relit, gt):
    """Writes composite | relit | gt side by side as PNG."""

    row = np.concatenate([_to_uint8(composite), _to_uint8(relit), _to_uint8(gt)], axis=1)
    PILImage.fromarray(row).save(str(path), format='PNG')


def evaluate(checkpoint, data_dir, test_ids=None, out_dir=None, grids=False, expected_config=None):
    """Scores a checkpoint on dataset samples.

    Args:
        checkpoint: checkpoint file
        data_dir: dataset directory
        test_ids: sample ids to evaluate (default: all)
        out_dir: if given, report.json and per_sample.csv are written there
        grids: also write composite | relit | gt PNGs to out_dir/grids
        expected_config: optional ModelConfig the checkpoint must match

    Returns:
        MetricReport
    """

    store = SixTupleStore(data_dir)
    manifest = store.manifest
    generator, ckpt = load_generator(checkpoint, expected_config,
                                     (manifest.image_side, manifest.envmap_shape))
    ids = list(test_ids) if test_ids is not None else store.ids
    if not ids:
        raise ContractError('no samples to evaluate')

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if grids:
            out_dir.joinpath('grids').mkdir(exist_ok=True)

    records = []
    for sample_id in ids:
        t = store.read(sample_id)
        relit, _, _ = relight(generator, [t])[0]
        model = score_images(relit, t.gt_harmonized)
        baseline = score_images(t.composite, t.gt_harmonized)
        record = {'sample_id': sample_id}
        record.update(model)
        record.update({'baseline_' + k: v for k, v in baseline.items()})
        records.append(record)
        if out_dir is not None and grids:
            save_grid(out_dir.joinpath('grids', '{}.png'.format(sample_id)), t.composite, relit, t.gt_harmonized)

    frame = pd.DataFrame.from_records(records).set_index('sample_id')
    report = MetricReport(config_digest=ckpt.header['config_digest'],
                          per_sample=frame,
                          aggregate={k: float(frame[k].mean()) for k in METRICS},
                          baseline={k: float(frame['baseline_' + k].mean()) for k in METRICS})

    if out_dir is not None:
        jdump(report.to_dict(), out_dir.joinpath('report.json'))
        frame.to_csv(str(out_dir.joinpath('per_sample.csv')))
    log.info('Evaluated %s samples: rmse %.5f (baseline %.5f)', len(ids), report.aggregate['rmse'], report.baseline['rmse'])
    return report

