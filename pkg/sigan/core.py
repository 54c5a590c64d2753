"""
Core data types shared by every SIGAN module.

Images, masks and environment maps are plain numpy arrays in channel-first
layout:

    Image   float32 (3, S, S), values in [0, 1], RGB
    Mask    float32 (S, S), values exactly 0 or 1
    EnvMap  float32 (3, H_e, W_e), W_e == 2 * H_e, values >= 0, equirectangular
            (row 0 = elevation +90 deg, column c = azimuth 2*pi*(c + 0.5) / W_e)

The configuration objects are immutable NamedTuples with dict round trips so
they can be stored in JSON files and checkpoint headers.
"""
import math
from typing import NamedTuple, Optional, Tuple

import numpy as np

from sigan.utils import ConfigurationError, digest, to_plain

__all__ = [
    'DEFAULT_SIDE',
    'TEST_SIDE',
    'DEFAULT_ENVMAP_SHAPE',
    'AblationFlags',
    'LossWeights',
    'ModelConfig',
    'SixTuple',
    'freeze',
    'validate_image',
    'validate_mask',
    'validate_envmap',
    'validate_six_tuple',
    'quantize_image',
    'quantize_six_tuple',
]

DEFAULT_SIDE = 256
TEST_SIDE = 64
DEFAULT_ENVMAP_SHAPE = (16, 32)
DOWNSAMPLING_STAGES = 5


class AblationFlags(NamedTuple):
    """Switches for the architecture components and the optional loss terms.

    All False is the "Basic" configuration, all True the full model.
    """
    use_msa: bool = True
    use_iem: bool = True
    use_l_per: bool = True
    use_l_nonillu: bool = True
    use_l_adv: bool = True

    @classmethod
    def basic(cls):
        return cls(False, False, False, False, False)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: bool(v) for k, v in d.items() if k in cls._fields})

    def label(self):
        """Human readable row label, e.g. 'Basic + MSA + IEM'."""

        names = [('use_msa', 'MSA'), ('use_l_per', 'L_per'), ('use_l_nonillu', 'L_nonillu'),
                 ('use_l_adv', 'L_adv'), ('use_iem', 'IEM')]
        parts = [n for f, n in names if getattr(self, f)]
        return ' + '.join(['Basic'] + parts)


class LossWeights(NamedTuple):
    """Coefficients of the total generator loss."""
    beta1: float = 25.0
    beta2: float = 6.0
    beta3: float = 0.04
    beta4: float = 0.5

    def validate(self):
        for name, value in self._asdict().items():
            if not value >= 0 or not math.isfinite(value):
                raise ConfigurationError('Loss weight {} must be finite and non-negative, got {}'.format(name, value))
        return self

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(v) for k, v in d.items() if k in cls._fields})


class ModelConfig(NamedTuple):
    """Architecture configuration of generator, discriminator and perceptual extractor."""
    image_side: int = DEFAULT_SIDE
    base_channels: int = 32
    envmap_shape: Tuple[int, int] = DEFAULT_ENVMAP_SHAPE
    illu_channel_fraction: float = 0.5
    ablation: AblationFlags = AblationFlags()
    max_channels: int = 512
    illum_encoder_mask: bool = True
    illum_decoder_width: int = 64
    disc_channels: int = 32
    perceptual_width: int = 64
    perceptual_weights: Optional[str] = None

    def stage_widths(self):
        """Output channels of the five encoder stages (doubling, capped)."""

        return [min(self.base_channels * 2 ** i, self.max_channels) for i in range(DOWNSAMPLING_STAGES)]

    @property
    def bottleneck_channels(self):
        return self.stage_widths()[-1]

    @property
    def illu_channels(self):
        return int(math.floor(self.bottleneck_channels * self.illu_channel_fraction))

    @property
    def noillu_channels(self):
        return self.bottleneck_channels - self.illu_channels

    @property
    def bottleneck_side(self):
        return self.image_side // 2 ** DOWNSAMPLING_STAGES

    def validate(self):
        """Checks the configuration invariants.

        Returns:
            self

        Raises:
            ConfigurationError: an invariant is violated
        """

        if self.image_side <= 0 or self.image_side % 2 ** DOWNSAMPLING_STAGES:
            raise ConfigurationError('image_side must be a positive multiple of {}, got {}'.format(
                2 ** DOWNSAMPLING_STAGES, self.image_side))
        if self.base_channels < 1 or self.max_channels < self.base_channels:
            raise ConfigurationError('Invalid channel widths base={} max={}'.format(self.base_channels, self.max_channels))
        h_e, w_e = self.envmap_shape
        if w_e != 2 * h_e or h_e % 4:
            raise ConfigurationError('envmap_shape must be (H, 2H) with H divisible by 4, got {}'.format(self.envmap_shape))
        if not 0 < self.illu_channel_fraction < 1:
            raise ConfigurationError('illu_channel_fraction must lie in (0, 1), got {}'.format(self.illu_channel_fraction))
        exact = self.bottleneck_channels * self.illu_channel_fraction
        if abs(exact - round(exact)) > 1e-9 or self.illu_channels < 1 or self.noillu_channels < 1:
            raise ConfigurationError('illu_channel_fraction {} does not split {} bottleneck channels into integer parts'.format(
                self.illu_channel_fraction, self.bottleneck_channels))
        if self.ablation.use_msa and self.bottleneck_side % 2:
            raise ConfigurationError('multi-scale attention needs even feature maps, bottleneck side is {} (image_side {})'.format(
                self.bottleneck_side, self.image_side))
        return self

    def to_dict(self):
        return to_plain(self)

    def digest(self):
        return digest(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if 'ablation' in d:
            d['ablation'] = AblationFlags.from_dict(d['ablation'])
        if 'envmap_shape' in d:
            d['envmap_shape'] = tuple(int(x) for x in d['envmap_shape'])
        return cls(**{k: v for k, v in d.items() if k in cls._fields})


class SixTuple(NamedTuple):
    """One training sample: input triplet plus ground-truth triplet."""
    composite: np.ndarray
    object_mask: np.ndarray
    background_mask: np.ndarray
    object_illum: np.ndarray
    background_illum: np.ndarray
    gt_harmonized: np.ndarray
    sample_id: str


def freeze(arr, dtype=np.float32):
    """Returns a read-only contiguous copy of arr."""

    out = np.ascontiguousarray(arr, dtype=dtype).copy()
    out.flags.writeable = False
    return out


def validate_image(img, name='image'):
    """Lists violations of the Image invariants.

    Args:
        img: array to check
        name: field name used in messages

    Returns:
        list of violation strings
    """

    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        return ['{}: expected shape (3, S, S), got {}'.format(name, img.shape)]
    violations = []
    if img.shape[1] != img.shape[2]:
        violations.append('{}: image must be square, got {}x{}'.format(name, img.shape[1], img.shape[2]))
    if not np.all(np.isfinite(img)):
        violations.append('{}: non-finite values'.format(name))
    elif img.min() < 0 or img.max() > 1:
        violations.append('{}: values outside [0, 1]'.format(name))
    return violations


def validate_mask(mask, side=None, name='mask'):
    """Lists violations of the Mask invariants (binary, optional size check)."""

    mask = np.asarray(mask)
    if mask.ndim != 2:
        return ['{}: expected shape (S, S), got {}'.format(name, mask.shape)]
    violations = []
    if side is not None and mask.shape != (side, side):
        violations.append('{}: size {} does not match image side {}'.format(name, mask.shape, side))
    if not np.all((mask == 0) | (mask == 1)):
        violations.append('{}: mask is not binary'.format(name))
    return violations


def validate_envmap(envmap, name='envmap'):
    """Lists violations of the EnvMap invariants."""

    envmap = np.asarray(envmap)
    if envmap.ndim != 3 or envmap.shape[0] != 3:
        return ['{}: expected shape (3, H, 2H), got {}'.format(name, envmap.shape)]
    violations = []
    if envmap.shape[2] != 2 * envmap.shape[1]:
        violations.append('{}: width must be twice the height, got {}'.format(name, envmap.shape[1:]))
    if not np.all(np.isfinite(envmap)):
        violations.append('{}: non-finite radiance'.format(name))
    elif envmap.min() < 0:
        violations.append('{}: negative radiance'.format(name))
    return violations


def validate_six_tuple(t, shadow_mask=None):
    """Checks every SixTuple invariant.

    Args:
        t: SixTuple
        shadow_mask: optional binary shadow region of the ground-truth image;
            when given, composite and ground truth must agree exactly outside
            object mask and shadow region

    Returns:
        list of violation descriptions, empty iff the tuple is well-formed
    """

    violations = []
    violations += validate_image(t.composite, 'composite')
    violations += validate_image(t.gt_harmonized, 'gt_harmonized')
    side = np.asarray(t.composite).shape[-1]
    violations += validate_mask(t.object_mask, side, 'object_mask')
    violations += validate_mask(t.background_mask, side, 'background_mask')
    violations += validate_envmap(t.object_illum, 'object_illum')
    violations += validate_envmap(t.background_illum, 'background_illum')

    if np.shape(t.composite) != np.shape(t.gt_harmonized):
        violations.append('gt_harmonized: shape {} differs from composite {}'.format(
            np.shape(t.gt_harmonized), np.shape(t.composite)))

    if np.shape(t.object_mask) == np.shape(t.background_mask):
        if not np.array_equal(np.asarray(t.background_mask), 1 - np.asarray(t.object_mask)):
            violations.append('background_mask: not the complement of object_mask')

    if shadow_mask is not None and not violations:
        outside = (np.asarray(t.object_mask) == 0) & (np.asarray(shadow_mask) == 0)
        differs = np.any(np.asarray(t.composite) != np.asarray(t.gt_harmonized), axis=0)
        n_bad = int(np.count_nonzero(differs & outside))
        if n_bad:
            violations.append('composite: differs from gt_harmonized at {} pixel(s) outside object and shadow region'.format(n_bad))

    return violations


def quantize_image(img):
    """Applies the 8-bit storage quantization to an Image.

    Returns:
        float32 array with values k/255
    """

    q = np.round(np.clip(np.asarray(img, dtype=np.float32), 0, 1) * 255).astype(np.uint8)
    return q.astype(np.float32) / np.float32(255)


def quantize_six_tuple(t):
    """Returns t as it reads back from storage (images quantized once)."""

    return t._replace(composite=freeze(quantize_image(t.composite)),
                      gt_harmonized=freeze(quantize_image(t.gt_harmonized)),
                      object_mask=freeze(t.object_mask),
                      background_mask=freeze(t.background_mask),
                      object_illum=freeze(t.object_illum),
                      background_illum=freeze(t.background_illum))
