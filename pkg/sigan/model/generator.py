"""
Relighting generator.

Two branches share the composite as input:

  relighting network   encoder (5 stages, optional multi-scale attention),
                       illumination exchange at the bottleneck, decoder with
                       skip connections producing the harmonized image
  illumination network encoder for the background illumination feature and
                       two decoders (same architecture, separate weights)
                       predicting object and background env maps

The bottleneck of the relighting encoder is split along channels into a
non-illumination part (first channels) and an illumination part (last
floor(C * q) channels).
"""
from typing import NamedTuple

import torch
from torch import nn
import torch.nn.functional as F

from sigan.model.batch import as_mask_tensor
from sigan.model.layers import BN_MOMENTUM, Encoder, seeded, upsample2
from sigan.utils import ConfigurationError, ContractError

__all__ = [
    'BottleneckSplit',
    'GeneratorOutput',
    'split_bottleneck',
    'illumination_exchange',
    'RelightingDecoder',
    'IlluminationDecoder',
    'Generator',
    'count_parameters',
]

RELIGHT_INPUT_CHANNELS = 5


class BottleneckSplit(NamedTuple):
    """Channel split of the relighting bottleneck and its mask-gated variants."""
    f_noillu: torch.Tensor
    f_illu: torch.Tensor
    f_noillu_obj: torch.Tensor
    f_illu_obj: torch.Tensor
    f_illu_bg: torch.Tensor
    mask: torch.Tensor

    @property
    def bottleneck(self):
        return torch.cat([self.f_noillu, self.f_illu], dim=1)


class GeneratorOutput(NamedTuple):
    """Harmonized image, predicted env maps and the bottleneck features."""
    relit: torch.Tensor
    obj_illum_pred: torch.Tensor
    bg_illum_pred: torch.Tensor
    bottleneck: BottleneckSplit


def resize_mask(object_mask, size):
    """Reduces a (B, 1, H, W) mask to size; a cell is set when any pixel in it is.

    An all-zero mask stays all zero.
    """

    return F.adaptive_max_pool2d(as_mask_tensor(object_mask), tuple(size))


def split_bottleneck(bottleneck, illu_channels, object_mask, f_illu_bg=None):
    """Splits the bottleneck into non-illumination and illumination channels.

    Args:
        bottleneck: (B, C, h, w) tensor
        illu_channels: number of illumination channels (taken from the end)
        object_mask: (B, 1, H, W) object mask at image resolution
        f_illu_bg: background illumination feature of the illumination encoder

    Returns:
        BottleneckSplit
    """

    n_noillu = bottleneck.shape[1] - illu_channels
    if illu_channels < 1 or n_noillu < 1:
        raise ConfigurationError('cannot split {} channels into {} illumination channels'.format(
            bottleneck.shape[1], illu_channels))
    mask = resize_mask(object_mask, bottleneck.shape[-2:])
    f_obj = bottleneck * mask
    return BottleneckSplit(f_noillu=bottleneck[:, :n_noillu],
                           f_illu=bottleneck[:, n_noillu:],
                           f_noillu_obj=f_obj[:, :n_noillu],
                           f_illu_obj=f_obj[:, n_noillu:],
                           f_illu_bg=f_illu_bg,
                           mask=mask)


def illumination_exchange(split, f_illu_bg, flags):
    """Replaces the object illumination feature by the background one.

    Args:
        split: BottleneckSplit
        f_illu_bg: background illumination feature
        flags: AblationFlags

    Returns:
        (decoder input, object illumination feature)

    Raises:
        ContractError: f_illu_bg doesn't match the illumination channels
    """

    if tuple(f_illu_bg.shape) != tuple(split.f_illu.shape):
        raise ContractError('background illumination feature {} does not match illumination channels {}'.format(
            tuple(f_illu_bg.shape), tuple(split.f_illu.shape)))
    if flags.use_iem:
        return torch.cat([split.f_noillu, f_illu_bg], dim=1), upsample2(split.f_illu_obj)
    return split.bottleneck, split.f_illu


class RelightingDecoder(nn.Module):
    """Five upsampling stages with skip concatenation and dilated convolutions."""

    def __init__(self, bottleneck_channels, skip_channels, out_channels, seed, name='relight_decoder'):
        """Creates the decoder.

        Args:
            bottleneck_channels: channels of the decoder input
            skip_channels: channels of the tensors concatenated at each stage,
                from coarse to fine
            out_channels: channels produced by each stage, from coarse to fine
            seed: model seed
            name: seeding name
        """

        super(RelightingDecoder, self).__init__()
        stages = []
        prev = bottleneck_channels
        for ix, (skip, width) in enumerate(zip(skip_channels, out_channels)):
            with seeded(seed, '{}.stage{}'.format(name, ix)):
                stages.append(nn.Sequential(
                    nn.Conv2d(prev + skip, width, kernel_size=3, padding=2, dilation=2),
                    nn.BatchNorm2d(width, momentum=BN_MOMENTUM),
                    nn.ReLU(inplace=False),
                ))
            prev = width
        self.stages = nn.ModuleList(stages)
        with seeded(seed, name + '.head'):
            self.head = nn.Conv2d(prev, 3, kernel_size=3, padding=1)

    def forward(self, x, skips):
        """Decodes x.

        Args:
            x: decoder input
            skips: tensors concatenated after each upsampling, coarse to fine

        Returns:
            image tensor in [0, 1]
        """

        if len(skips) != len(self.stages):
            raise ContractError('expected {} skip tensors, got {}'.format(len(self.stages), len(skips)))
        for stage, skip in zip(self.stages, skips):
            x = upsample2(x)
            if x.shape[-2:] != skip.shape[-2:]:
                raise ContractError('skip of size {} does not match decoder size {}'.format(
                    tuple(skip.shape[-2:]), tuple(x.shape[-2:])))
            x = stage(torch.cat([x, skip], dim=1))
        return torch.sigmoid(self.head(x))


class IlluminationDecoder(nn.Module):
    """Predicts a non-negative (3, H_e, W_e) env map from a feature map."""

    def __init__(self, in_channels, envmap_shape, width, seed, name):
        super(IlluminationDecoder, self).__init__()
        self.envmap_shape = tuple(envmap_shape)
        with seeded(seed, name):
            self.reduce = nn.Conv2d(in_channels, width, kernel_size=1)
            self.up = nn.ModuleList([
                nn.Conv2d(width, width, kernel_size=3, padding=1, padding_mode='replicate')
                for _ in range(2)
            ])
            self.head = nn.Conv2d(width, 3, kernel_size=3, padding=1, padding_mode='replicate')

    def forward(self, feature):
        h_e, w_e = self.envmap_shape
        x = F.interpolate(feature, size=(h_e // 4, w_e // 4), mode='nearest')
        x = F.relu(self.reduce(x))
        for conv in self.up:
            x = F.relu(conv(upsample2(x)))
        return F.softplus(self.head(x))


class Generator(nn.Module):
    """Relighting + illumination network."""

    def __init__(self, config, seed=0):
        """Creates the generator.

        Args:
            config: ModelConfig (validated here)
            seed: parameter initialisation seed
        """

        super(Generator, self).__init__()
        self.config = config.validate()
        self.seed = int(seed)
        flags = config.ablation
        widths = config.stage_widths()

        self.relight_encoder = Encoder(RELIGHT_INPUT_CHANNELS, widths, flags.use_msa, seed, 'relight_encoder')
        illum_in = 4 if config.illum_encoder_mask else 3
        illum_widths = widths[:-1] + [config.illu_channels]
        self.illum_encoder = Encoder(illum_in, illum_widths, False, seed, 'illum_encoder')

        skip_channels = [widths[3], widths[2], widths[1], widths[0], RELIGHT_INPUT_CHANNELS]
        out_channels = [widths[3], widths[2], widths[1], widths[0], widths[0]]
        self.relight_decoder = RelightingDecoder(config.bottleneck_channels, skip_channels, out_channels, seed)

        self.obj_illum_decoder = IlluminationDecoder(config.illu_channels, config.envmap_shape,
                                                     config.illum_decoder_width, seed, 'obj_illum_decoder')
        self.bg_illum_decoder = IlluminationDecoder(config.illu_channels, config.envmap_shape,
                                                    config.illum_decoder_width, seed, 'bg_illum_decoder')

    @property
    def flags(self):
        return self.config.ablation

    def forward(self, composite, object_mask, background_mask):
        """Runs both networks.

        Args:
            composite: (B, 3, S, S)
            object_mask: (B, 1, S, S) or (B, S, S)
            background_mask: (B, 1, S, S) or (B, S, S)

        Returns:
            GeneratorOutput
        """

        object_mask = as_mask_tensor(object_mask)
        background_mask = as_mask_tensor(background_mask)
        x = torch.cat([composite, object_mask, background_mask], dim=1)

        skips = self.relight_encoder(x)
        if self.config.illum_encoder_mask:
            f_illu_bg = self.illum_encoder(torch.cat([composite, background_mask], dim=1))[-1]
        else:
            f_illu_bg = self.illum_encoder(composite)[-1]

        split = split_bottleneck(skips[-1], self.config.illu_channels, object_mask, f_illu_bg)
        decoder_input, obj_feature = illumination_exchange(split, f_illu_bg, self.flags)

        relit = self.relight_decoder(decoder_input, [skips[3], skips[2], skips[1], skips[0], x])
        return GeneratorOutput(relit=relit,
                               obj_illum_pred=self.obj_illum_decoder(obj_feature),
                               bg_illum_pred=self.bg_illum_decoder(f_illu_bg),
                               bottleneck=split)


def count_parameters(module):
    return sum(p.numel() for p in module.parameters())
