"""
Loss terms of the relighting generator.

    l_illu     squared L2 distance (sum of squares) of predicted and true env
               maps, object plus background; averaged over the batch
    l_nonillu  mean squared difference of the object non-illumination
               features of the same object under two illuminations
    l_per      perceptual distance in three slots (object env map,
               background env map, harmonized image)
    l_adv      discriminator loss and non-saturating generator loss

l_total = beta1 * l_illu + beta2 * l_nonillu + beta3 * l_per + beta4 * l_adv_g,
where disabled terms contribute exactly 0.
"""
import logging
import math
from pathlib import Path
from typing import NamedTuple

import torch
from torch import nn
import torch.nn.functional as F

from sigan.model.layers import seeded
from sigan.utils import ConfigurationError, ContractError, MissingFileError

__all__ = [
    'ADV_EPS',
    'PERCEPTUAL_MIN_SIDE',
    'LossReport',
    'l_illu',
    'l_nonillu',
    'PerceptualExtractor',
    'perceptual_features',
    'perceptual_distance',
    'l_per_slots',
    'l_per',
    'l_adv',
    'total_loss',
]

log = logging.getLogger(__name__)

ADV_EPS = 1e-7
PERCEPTUAL_MIN_SIDE = 32
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class LossReport(NamedTuple):
    """Loss values of one training step."""
    l_illu: float = 0.0
    l_nonillu: float = 0.0
    l_per: float = 0.0
    l_adv_g: float = 0.0
    l_adv_d: float = 0.0
    l_total: float = 0.0

    def non_finite(self):
        """Names of terms that are not finite."""

        return [k for k, v in self._asdict().items() if not math.isfinite(float(v))]


def _check_shapes(a, b, what):
    if tuple(a.shape) != tuple(b.shape):
        raise ContractError('{}: shape mismatch {} vs {}'.format(what, tuple(a.shape), tuple(b.shape)))


def _sum_squares(pred, gt):
    sq = (pred - gt) ** 2
    if sq.dim() == 4:
        return sq.sum(dim=(1, 2, 3)).mean()
    return sq.sum()


def l_illu(pred_obj, gt_obj, pred_bg, gt_bg):
    """Illumination loss.

    Args:
        pred_obj, gt_obj: predicted / true object env maps, (3, H, W) or (B, 3, H, W)
        pred_bg, gt_bg: predicted / true background env maps

    Returns:
        scalar tensor
    """

    _check_shapes(pred_obj, gt_obj, 'l_illu (object)')
    _check_shapes(pred_bg, gt_bg, 'l_illu (background)')
    return _sum_squares(pred_obj, gt_obj) + _sum_squares(pred_bg, gt_bg)


def l_nonillu(f1, f2):
    """Non-illumination feature loss, mean of squared differences."""

    _check_shapes(f1, f2, 'l_nonillu')
    return ((f1 - f2) ** 2).mean()


class PerceptualExtractor(nn.Module):
    """Frozen VGG-16 feature stack (conv64 x2, pool, conv128 x2, pool, conv256 x3, pool).

    The seven convolutions and three pooling layers sit at the indices of
    torchvision's vgg16().features, so its state dict (keys 0.* to 14.*) can be
    loaded directly. Without weights the stack is initialised from a fixed seed.
    Features are tapped after every pooling layer.
    """

    TAPS = (4, 9, 16)
    CONVS = (0, 2, 5, 7, 10, 12, 14)

    def __init__(self, width=64, seed=0, weights=None):
        """Creates the extractor.

        Args:
            width: channels of the first block (64 reproduces VGG-16)
            seed: initialisation seed
            weights: optional path of a torch-saved VGG-16 features state dict
        """

        super(PerceptualExtractor, self).__init__()
        plan = [width, width, 'M', 2 * width, 2 * width, 'M', 4 * width, 4 * width, 4 * width, 'M']
        layers = []
        prev = 3
        with seeded(seed, 'perceptual'):
            for item in plan:
                if item == 'M':
                    layers.append(nn.MaxPool2d(kernel_size=2, stride=2))
                else:
                    layers.append(nn.Conv2d(prev, item, kernel_size=3, padding=1))
                    layers.append(nn.ReLU(inplace=False))
                    prev = item
        self.features = nn.Sequential(*layers)
        self.register_buffer('mean', torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1), persistent=False)
        self.register_buffer('std', torch.tensor(IMAGENET_STD).view(1, 3, 1, 1), persistent=False)

        if weights is not None:
            self.load_vgg16(weights)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def load_vgg16(self, path):
        """Loads the first layers of a torchvision VGG-16 features state dict."""

        path = Path(path)
        if not path.exists():
            raise MissingFileError(path, 'perceptual weights not found')
        state = torch.load(str(path), map_location='cpu')
        state = {k[len('features.'):] if k.startswith('features.') else k: v for k, v in state.items()}
        wanted = {k: v for k, v in state.items() if int(k.split('.')[0]) in self.CONVS}
        own = self.features.state_dict()
        if set(wanted) != set(own):
            raise ConfigurationError('{} does not hold the expected VGG-16 layers'.format(path))
        for k, v in wanted.items():
            if tuple(v.shape) != tuple(own[k].shape):
                raise ConfigurationError('perceptual weight {} has shape {}, expected {}'.format(
                    k, tuple(v.shape), tuple(own[k].shape)))
        self.features.load_state_dict(wanted)
        log.info('Loaded perceptual weights from %s', path)

    def train(self, mode=True):
        # always frozen
        return super(PerceptualExtractor, self).train(False)

    def forward(self, img):
        x = (img - self.mean.to(img.dtype)) / self.std.to(img.dtype)
        taps = []
        for ix, layer in enumerate(self.features):
            x = layer(x)
            if ix in self.TAPS:
                taps.append(x)
        return taps


def perceptual_features(img, extractor):
    """Feature maps of img at the extractor's tap points."""

    if img.dim() == 3:
        img = img.unsqueeze(0)
    return extractor(img)


def _upsample_to_min_side(x, min_side=PERCEPTUAL_MIN_SIDE):
    factor = int(math.ceil(min_side / float(min(x.shape[-2:]))))
    if factor > 1:
        return F.interpolate(x, scale_factor=factor, mode='nearest')
    return x


def perceptual_distance(a, b, extractor):
    """Mean over taps of the feature MSE between a and b."""

    _check_shapes(a, b, 'perceptual_distance')
    fa = perceptual_features(a, extractor)
    fb = perceptual_features(b, extractor)
    return sum(F.mse_loss(x, y) for x, y in zip(fa, fb)) / len(fa)


def l_per_slots(pred, target, extractor):
    """Perceptual distance of the three slots.

    Args:
        pred: GeneratorOutput
        target: TensorBatch with the ground truth
        extractor: PerceptualExtractor

    Returns:
        (object env map term, background env map term, image term)
    """

    obj = perceptual_distance(_upsample_to_min_side(pred.obj_illum_pred),
                              _upsample_to_min_side(target.object_illum), extractor)
    bg = perceptual_distance(_upsample_to_min_side(pred.bg_illum_pred),
                             _upsample_to_min_side(target.background_illum), extractor)
    img = perceptual_distance(pred.relit, target.gt_harmonized, extractor)
    return obj, bg, img


def l_per(pred, target, extractor):
    """Perceptual loss, sum of the three slot distances."""

    obj, bg, img = l_per_slots(pred, target, extractor)
    return obj + bg + img


def l_adv(d_real, d_fake, eps=ADV_EPS):
    """Adversarial losses.

    Args:
        d_real: discriminator output on real pairs
        d_fake: discriminator output on generated pairs
        eps: clamping margin

    Returns:
        (discriminator loss, generator loss), batch means
    """

    d_real = torch.as_tensor(d_real).clamp(eps, 1 - eps)
    d_fake = torch.as_tensor(d_fake).clamp(eps, 1 - eps)
    d_loss = -(torch.log(d_real) + torch.log(1 - d_fake)).mean()
    g_loss = -torch.log(d_fake).mean()
    return d_loss, g_loss


def total_loss(components, weights, flags):
    """Weighted generator loss.

    Args:
        components: object with l_illu, l_nonillu, l_per and l_adv_g (floats or tensors)
        weights: LossWeights
        flags: AblationFlags

    Returns:
        weighted sum of the enabled terms
    """

    total = weights.beta1 * components.l_illu
    if flags.use_l_nonillu:
        total = total + weights.beta2 * components.l_nonillu
    if flags.use_l_per:
        total = total + weights.beta3 * components.l_per
    if flags.use_l_adv:
        total = total + weights.beta4 * components.l_adv_g
    return total
