"""
On-disk six-tuple dataset.

Layout of a dataset directory:

    <root>/manifest.json
    <root>/<id>/composite.png        8-bit RGB
    <root>/<id>/object_mask.png      8-bit gray, 0 or 255
    <root>/<id>/background_mask.png  8-bit gray, 0 or 255
    <root>/<id>/gt.png               8-bit RGB
    <root>/<id>/obj_illum.f32        raw little-endian float32, C-order (3, H_e, W_e)
    <root>/<id>/bg_illum.f32         raw little-endian float32, C-order (3, H_e, W_e)
    <root>/<id>/meta.json            sample_id, image_side, env map shapes, scene

Images are quantized to 8 bit once on write. Reading returns exactly the
quantized values (see sigan.core.quantize_six_tuple).
"""
import logging
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple
import warnings

import numpy as np
import pandas as pd
from PIL import Image as PILImage

from sigan.core import SixTuple, freeze
from sigan.scene.render import SceneSpec, occluder_area_ratio
from sigan.utils import (ContractError, MalformedSidecarError, MissingFileError,
                         ShapeMismatchError, derive_seed, jdump, jload, to_plain)

__all__ = [
    'MANIFEST_VERSION',
    'DatasetManifest',
    'DatasetStats',
    'SixTupleStore',
    'write_sample',
    'read_sample',
    'write_manifest',
    'read_manifest',
    'iter_samples',
    'split',
    'shadow_region',
    'bright_region',
    'per_sample_ratios',
    'compute_stats',
    'stats_to_dict',
    'save_stats_figures',
]

log = logging.getLogger(__name__)

MANIFEST_VERSION = '1'
ENVMAP_DTYPE = np.dtype('<f4')
LUMA = np.array([0.2126, 0.7152, 0.0722], dtype=np.float64)
BRIGHT_PARTS = 10

FILES = {
    'composite': 'composite.png',
    'object_mask': 'object_mask.png',
    'background_mask': 'background_mask.png',
    'gt_harmonized': 'gt.png',
    'object_illum': 'obj_illum.f32',
    'background_illum': 'bg_illum.f32',
}
META = 'meta.json'
MANIFEST = 'manifest.json'


class DatasetManifest(NamedTuple):
    """Index of a dataset directory."""
    version: str
    sample_ids: List[str]
    image_side: int
    envmap_shape: Tuple[int, int]
    generator_config_digest: str
    pair_map: Optional[Dict[str, str]] = None

    def validate(self):
        """Checks id uniqueness and the pairing involution.

        Raises:
            ContractError: invariant violated
        """

        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ContractError('manifest sample_ids are not unique')
        if self.pair_map:
            ids = set(self.sample_ids)
            for a, b in self.pair_map.items():
                if a == b:
                    raise ContractError('sample {} is paired with itself'.format(a))
                if a not in ids or b not in ids:
                    raise ContractError('pair {} <-> {} references unknown sample'.format(a, b))
                if self.pair_map.get(b) != a:
                    raise ContractError('pair_map is not symmetric for {} -> {}'.format(a, b))
        return self

    def partner(self, sample_id):
        """Partner id of sample_id, or None."""

        if not self.pair_map:
            return None
        return self.pair_map.get(sample_id)

    @classmethod
    def from_dict(cls, d):
        return cls(version=str(d['version']),
                   sample_ids=[str(x) for x in d['sample_ids']],
                   image_side=int(d['image_side']),
                   envmap_shape=tuple(int(x) for x in d['envmap_shape']),
                   generator_config_digest=str(d['generator_config_digest']),
                   pair_map=dict(d['pair_map']) if d.get('pair_map') else None)


class DatasetStats(NamedTuple):
    """Dataset statistics: ratio histograms and illumination probability map."""
    bin_edges: np.ndarray
    object_ratio_counts: np.ndarray
    shadow_ratio_counts: np.ndarray
    illum_probability_map: np.ndarray
    n_samples: int
    occluder_ratio_counts: Optional[np.ndarray] = None


def _save_png(arr, path):
    PILImage.fromarray(arr).save(str(path), format='PNG')


def _load_png(path, mode):
    if not path.exists():
        raise MissingFileError(path, 'file not found')
    try:
        with PILImage.open(str(path)) as img:
            return np.asarray(img.convert(mode))
    except OSError as e:
        raise MalformedSidecarError(path, 'unreadable PNG ({})'.format(e))


def _image_to_uint8(img):
    return np.round(np.clip(np.asarray(img, dtype=np.float32), 0, 1) * 255).astype(np.uint8).transpose(1, 2, 0)


def write_sample(root, t, scene=None):
    """Writes a SixTuple below root/<sample_id>.

    Args:
        root: dataset directory
        t: SixTuple
        scene: optional SceneSpec stored in meta.json

    Returns:
        sample directory (Path)
    """

    sample_dir = Path(root).joinpath(t.sample_id)
    sample_dir.mkdir(parents=True, exist_ok=True)

    _save_png(_image_to_uint8(t.composite), sample_dir.joinpath(FILES['composite']))
    _save_png(_image_to_uint8(t.gt_harmonized), sample_dir.joinpath(FILES['gt_harmonized']))
    for key in ('object_mask', 'background_mask'):
        _save_png((np.asarray(getattr(t, key)) > 0.5).astype(np.uint8) * 255, sample_dir.joinpath(FILES[key]))

    for key in ('object_illum', 'background_illum'):
        arr = np.ascontiguousarray(getattr(t, key), dtype=ENVMAP_DTYPE)
        sample_dir.joinpath(FILES[key]).write_bytes(arr.tobytes(order='C'))

    meta = {
        'sample_id': t.sample_id,
        'image_side': int(np.shape(t.composite)[-1]),
        'obj_illum_shape': list(np.shape(t.object_illum)),
        'bg_illum_shape': list(np.shape(t.background_illum)),
        'scene': to_plain(scene) if scene is not None else None,
    }
    jdump(meta, sample_dir.joinpath(META))
    return sample_dir


def _read_envmap(path, shape):
    if not path.exists():
        raise MissingFileError(path, 'file not found')
    raw = path.read_bytes()
    expected = int(np.prod(shape)) * ENVMAP_DTYPE.itemsize
    if len(raw) != expected:
        raise ShapeMismatchError(path, 'expected {} bytes for shape {}, found {}'.format(expected, tuple(shape), len(raw)))
    return np.frombuffer(raw, dtype=ENVMAP_DTYPE).reshape(shape).astype(np.float32)


def read_meta(root, sample_id):
    """Reads and checks the meta.json sidecar of a sample."""

    path = Path(root).joinpath(sample_id, META)
    meta = jload(path)
    try:
        for key in ('obj_illum_shape', 'bg_illum_shape'):
            shape = [int(x) for x in meta[key]]
            if len(shape) != 3:
                raise ValueError('{} must have three entries'.format(key))
            meta[key] = tuple(shape)
        meta['image_side'] = int(meta['image_side'])
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedSidecarError(path, 'missing or invalid field ({})'.format(e))
    return meta


def read_sample(root, sample_id):
    """Reads a SixTuple written by write_sample.

    Raises:
        MissingFileError: a sample file is missing
        MalformedSidecarError: meta.json unreadable or incomplete
        ShapeMismatchError: stored sizes disagree with meta.json
    """

    sample_dir = Path(root).joinpath(sample_id)
    meta = read_meta(root, sample_id)
    side = meta['image_side']

    images = {}
    for key, mode in (('composite', 'RGB'), ('gt_harmonized', 'RGB'),
                      ('object_mask', 'L'), ('background_mask', 'L')):
        path = sample_dir.joinpath(FILES[key])
        arr = _load_png(path, mode)
        if arr.shape[:2] != (side, side):
            raise ShapeMismatchError(path, 'image size {} does not match image_side {}'.format(arr.shape[:2], side))
        if mode == 'RGB':
            images[key] = freeze(arr.transpose(2, 0, 1).astype(np.float32) / np.float32(255))
        else:
            images[key] = freeze(arr > 127)

    return SixTuple(
        composite=images['composite'],
        object_mask=images['object_mask'],
        background_mask=images['background_mask'],
        object_illum=freeze(_read_envmap(sample_dir.joinpath(FILES['object_illum']), meta['obj_illum_shape'])),
        background_illum=freeze(_read_envmap(sample_dir.joinpath(FILES['background_illum']), meta['bg_illum_shape'])),
        gt_harmonized=images['gt_harmonized'],
        sample_id=str(meta.get('sample_id', sample_id)))


def write_manifest(root, manifest):
    """Validates and writes manifest.json."""

    manifest.validate()
    Path(root).mkdir(parents=True, exist_ok=True)
    jdump(manifest, Path(root).joinpath(MANIFEST))


def read_manifest(root):
    """Reads manifest.json of a dataset directory.

    Raises:
        MissingFileError: no manifest
        MalformedSidecarError: manifest incomplete or inconsistent
    """

    path = Path(root).joinpath(MANIFEST)
    d = jload(path)
    try:
        manifest = DatasetManifest.from_dict(d)
        manifest.validate()
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedSidecarError(path, 'invalid manifest ({})'.format(e))
    return manifest


def iter_samples(root, ids=None):
    """Yields SixTuples in manifest order (or in the order of ids)."""

    if ids is None:
        ids = read_manifest(root).sample_ids
    for sample_id in ids:
        yield read_sample(root, sample_id)


class SixTupleStore(object):
    """Dataset directory with manifest, sample I/O and ordered iteration."""

    def __init__(self, root):
        """Creates a SixTupleStore.

        Args:
            root: dataset directory (may not exist yet)
        """

        self.root = Path(root)
        self._manifest = None

    @property
    def exists(self):
        return self.root.joinpath(MANIFEST).exists()

    @property
    def manifest(self):
        if self._manifest is None:
            self._manifest = read_manifest(self.root)
        return self._manifest

    def create(self, manifest):
        """Writes the manifest (samples are written with write)."""

        write_manifest(self.root, manifest)
        self._manifest = manifest

    def write(self, t, scene=None):
        return write_sample(self.root, t, scene)

    def read(self, sample_id):
        return read_sample(self.root, sample_id)

    def scene(self, sample_id):
        """Scene parameters stored with a sample, or None."""

        return read_meta(self.root, sample_id).get('scene')

    def occluder_ratio(self, sample_id):
        """Occluder area ratio from the scene sidecar, or None without one."""

        scene = self.scene(sample_id)
        if scene is None:
            return None
        try:
            return occluder_area_ratio(SceneSpec.from_dict(scene))
        except (KeyError, TypeError, ValueError) as err:
            raise MalformedSidecarError(self.root.joinpath(sample_id, META), 'bad scene: {}'.format(err))

    def occluder_ratios(self):
        """Occluder area ratio per sample id, or None if any sample has no scene."""

        ratios = {}
        for sample_id in self.ids:
            ratio = self.occluder_ratio(sample_id)
            if ratio is None:
                return None
            ratios[sample_id] = ratio
        return ratios

    @property
    def ids(self):
        return list(self.manifest.sample_ids)

    def partner(self, sample_id):
        return self.manifest.partner(sample_id)

    def __iter__(self):
        return iter_samples(self.root, self.ids)

    def __len__(self):
        return len(self.manifest.sample_ids)


def split(manifest, train_fraction, seed):
    """Deterministic train/test split keeping pairs together.

    Pairs are shuffled as units and assigned to the training side until it
    holds round(train_fraction * n) samples; everything else is test.

    Args:
        manifest: DatasetManifest
        train_fraction: fraction in (0, 1)
        seed: integer seed

    Returns:
        (train ids, test ids), each in manifest order

    Raises:
        ContractError: fraction out of range
    """

    if not 0 < train_fraction < 1:
        raise ContractError('train_fraction must lie in (0, 1), got {}'.format(train_fraction))

    units = []
    seen = set()
    for sample_id in manifest.sample_ids:
        if sample_id in seen:
            continue
        partner = manifest.partner(sample_id)
        unit = (sample_id,) if partner is None else (sample_id, partner)
        seen.update(unit)
        units.append(unit)

    rng = np.random.default_rng(derive_seed(seed, 'split'))
    order = rng.permutation(len(units))
    target = int(round(train_fraction * len(manifest.sample_ids)))

    train = set()
    for ix in order:
        unit = units[ix]
        if len(train) + len(unit) <= target:
            train.update(unit)

    if not train or len(train) == len(manifest.sample_ids):
        warnings.warn('Split with fraction {} leaves one side empty ({} samples)'.format(
            train_fraction, len(manifest.sample_ids)), Warning)

    train_ids = [x for x in manifest.sample_ids if x in train]
    test_ids = [x for x in manifest.sample_ids if x not in train]
    return train_ids, test_ids


def shadow_region(t):
    """Shadow support recovered as gt != composite outside the object."""

    differs = np.any(np.asarray(t.gt_harmonized) != np.asarray(t.composite), axis=0)
    return differs & (np.asarray(t.object_mask) == 0)


def bright_region(img):
    """Mask of the brightest decile of the luminance.

    Exactly ceil(N / 10) pixels are set; ties go to the lower flat index.
    """

    lum = np.tensordot(LUMA, np.asarray(img, dtype=np.float64), axes=1)
    flat = lum.ravel()
    keep = -(-flat.size // BRIGHT_PARTS)
    region = np.zeros(flat.size, dtype=bool)
    region[np.argsort(-flat, kind='stable')[:keep]] = True
    return region.reshape(lum.shape)


def _occluder_ratio(occluder_ratios, sample_id):
    try:
        return float(occluder_ratios[sample_id])
    except KeyError:
        raise ContractError('no occluder ratio for sample {!r}'.format(sample_id))


def per_sample_ratios(samples, occluder_ratios=None):
    """Object and shadow area ratios per sample.

    Args:
        samples: iterable of SixTuple
        occluder_ratios: optional mapping sample_id -> occluder area ratio,
            adds an occluder_ratio column

    Returns:
        pandas.DataFrame indexed by sample_id with columns object_ratio, shadow_ratio
    """

    columns = ['sample_id', 'object_ratio', 'shadow_ratio']
    if occluder_ratios is not None:
        columns.append('occluder_ratio')
    records = []
    for t in samples:
        npix = float(np.size(t.object_mask))
        record = {'sample_id': t.sample_id,
                  'object_ratio': float(np.count_nonzero(t.object_mask)) / npix,
                  'shadow_ratio': float(np.count_nonzero(shadow_region(t))) / npix}
        if occluder_ratios is not None:
            record['occluder_ratio'] = _occluder_ratio(occluder_ratios, t.sample_id)
        records.append(record)
    return pd.DataFrame.from_records(records, columns=columns).set_index('sample_id')


def compute_stats(samples, bins=None, occluder_ratios=None):
    """Ratio histograms and illumination probability map.

    Args:
        samples: iterable of SixTuple (consumed once)
        bins: histogram bin edges (default 20 uniform bins on [0, 1])
        occluder_ratios: optional mapping sample_id -> occluder area ratio;
            every sample needs an entry

    Returns:
        DatasetStats

    Raises:
        ContractError: no samples, or a sample without occluder ratio
    """

    edges = np.linspace(0, 1, 21) if bins is None else np.asarray(bins, dtype=np.float64)
    object_ratios = []
    shadow_ratios = []
    occ_ratios = []
    bright_count = None

    for t in samples:
        npix = float(np.size(t.object_mask))
        object_ratios.append(float(np.count_nonzero(t.object_mask)) / npix)
        shadow_ratios.append(float(np.count_nonzero(shadow_region(t))) / npix)
        if occluder_ratios is not None:
            occ_ratios.append(_occluder_ratio(occluder_ratios, t.sample_id))
        bright = bright_region(t.gt_harmonized).astype(np.int64)
        bright_count = bright if bright_count is None else bright_count + bright

    if not object_ratios:
        raise ContractError('compute_stats needs at least one sample')

    n = len(object_ratios)
    object_counts, _ = np.histogram(object_ratios, bins=edges)
    shadow_counts, _ = np.histogram(shadow_ratios, bins=edges)
    occluder_counts = np.histogram(occ_ratios, bins=edges)[0] if occluder_ratios is not None else None
    log.debug('Statistics over %s samples', n)
    return DatasetStats(bin_edges=edges,
                        object_ratio_counts=object_counts,
                        shadow_ratio_counts=shadow_counts,
                        illum_probability_map=bright_count.astype(np.float64) / n,
                        n_samples=n,
                        occluder_ratio_counts=occluder_counts)


def stats_to_dict(stats):
    """JSON-able form of DatasetStats."""

    d = {
        'n_samples': stats.n_samples,
        'object_ratio_histogram': {'bin_edges': to_plain(stats.bin_edges), 'counts': to_plain(stats.object_ratio_counts)},
        'shadow_ratio_histogram': {'bin_edges': to_plain(stats.bin_edges), 'counts': to_plain(stats.shadow_ratio_counts)},
        'illum_probability_map': to_plain(stats.illum_probability_map),
    }
    if stats.occluder_ratio_counts is not None:
        d['occluder_ratio_histogram'] = {'bin_edges': to_plain(stats.bin_edges),
                                         'counts': to_plain(stats.occluder_ratio_counts)}
    return d


def save_stats_figures(stats, prefix):
    """Renders ratio histograms and the probability map.

    Args:
        stats: DatasetStats
        prefix: output path prefix; writes <prefix>_ratios.png and <prefix>_probability.png

    Returns:
        list of written paths
    """

    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt # pylint: disable=import-outside-toplevel

    prefix = Path(prefix)
    hist_path = prefix.with_name(prefix.name + '_ratios.png')
    prob_path = prefix.with_name(prefix.name + '_probability.png')

    edges = stats.bin_edges
    widths = np.diff(edges)
    panels = [(stats.object_ratio_counts, 'object area ratio'), (stats.shadow_ratio_counts, 'shadow area ratio')]
    if stats.occluder_ratio_counts is not None:
        panels.append((stats.occluder_ratio_counts, 'occluder area ratio'))
    fig, axes = plt.subplots(1, len(panels), figsize=(4.5 * len(panels), 3.5))
    for ax, (counts, title) in zip(axes, panels):
        ax.bar(edges[:-1], counts, width=widths, align='edge', edgecolor='black')
        ax.set_title(title)
        ax.set_xlabel('ratio')
        ax.set_ylabel('samples')
    fig.tight_layout()
    fig.savefig(str(hist_path))
    plt.close(fig)

    prob = np.round(np.clip(stats.illum_probability_map, 0, 1) * 255).astype(np.uint8)
    _save_png(prob, prob_path)
    return [hist_path, prob_path]
