"""
Building blocks shared by generator and discriminator.

Every block is constructed inside `seeded`, so its initial weights depend only
on the model seed and the block name.
"""
import contextlib

import torch
from torch import nn
import torch.nn.functional as F

from sigan.utils import ConfigurationError, derive_seed

__all__ = ['BN_MOMENTUM', 'seeded', 'conv_bn_relu', 'ResidualBlock', 'MSABlock', 'EncoderStage', 'Encoder', 'upsample2']

# running statistics decay 0.9
BN_MOMENTUM = 0.1


@contextlib.contextmanager
def seeded(seed, name):
    """Runs the enclosed parameter construction under a name-derived seed."""

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(derive_seed(seed, name))
        yield


def conv_bn_relu(in_channels, out_channels, dilation=1):
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=dilation, dilation=dilation),
        nn.BatchNorm2d(out_channels, momentum=BN_MOMENTUM),
        nn.ReLU(inplace=False),
    )


class ResidualBlock(nn.Module):
    """Three conv-BN-ReLU layers with a residual connection."""

    def __init__(self, in_channels, out_channels):
        super(ResidualBlock, self).__init__()
        self.body = nn.Sequential(
            conv_bn_relu(in_channels, out_channels),
            conv_bn_relu(out_channels, out_channels),
            conv_bn_relu(out_channels, out_channels),
        )
        if in_channels == out_channels:
            self.shortcut = nn.Identity()
        else:
            self.shortcut = nn.Conv2d(in_channels, out_channels, kernel_size=1)

    def forward(self, x):
        return self.body(x) + self.shortcut(x)


class MSABlock(nn.Module):
    """Multi-scale attention.

    Three branches (1x1, 3x3 and 5x5 kernels) produce sigmoid attention maps.
    Each map gates the input, the gated maps are concatenated, fused back to C
    channels by a 1x1 convolution and added to the input.
    """

    def __init__(self, channels):
        super(MSABlock, self).__init__()
        self.branch1 = nn.Sequential(
            nn.Conv2d(channels, channels, kernel_size=1),
            nn.ReLU(inplace=False),
            nn.Conv2d(channels, channels, kernel_size=1),
        )
        self.branch3 = nn.Sequential(
            nn.Conv2d(channels, channels, kernel_size=3, stride=2, padding=1),
            nn.ReLU(inplace=False),
            nn.Conv2d(channels, channels, kernel_size=3, stride=1, padding=1),
            nn.Upsample(scale_factor=2, mode='nearest'),
        )
        self.branch5 = nn.Sequential(
            nn.Conv2d(channels, channels, kernel_size=5, stride=2, padding=2),
            nn.ReLU(inplace=False),
            nn.Conv2d(channels, channels, kernel_size=5, stride=1, padding=2),
            nn.Upsample(scale_factor=2, mode='nearest'),
        )
        self.fuse = nn.Conv2d(3 * channels, channels, kernel_size=1)

    def attention_maps(self, x):
        """The three attention maps, each with the shape of x."""

        if x.shape[-1] % 2 or x.shape[-2] % 2:
            raise ConfigurationError('multi-scale attention needs even spatial dims, got {}x{}'.format(
                x.shape[-2], x.shape[-1]))
        return [torch.sigmoid(branch(x)) for branch in (self.branch1, self.branch3, self.branch5)]

    def forward(self, x):
        attended = [a * x for a in self.attention_maps(x)]
        return x + self.fuse(torch.cat(attended, dim=1))


class EncoderStage(nn.Module):
    """Residual block, 2x average pooling and optional attention."""

    def __init__(self, in_channels, out_channels, use_msa, seed, name):
        super(EncoderStage, self).__init__()
        with seeded(seed, name + '.block'):
            self.block = ResidualBlock(in_channels, out_channels)
        self.pool = nn.AvgPool2d(kernel_size=2)
        if use_msa:
            with seeded(seed, name + '.msa'):
                self.msa = MSABlock(out_channels)
        else:
            self.msa = nn.Identity()

    def forward(self, x):
        return self.msa(self.pool(self.block(x)))


class Encoder(nn.Module):
    """Five downsampling stages; returns the output of every stage."""

    def __init__(self, in_channels, widths, use_msa, seed, name):
        super(Encoder, self).__init__()
        self.in_channels = in_channels
        self.widths = list(widths)
        stages = []
        prev = in_channels
        for ix, width in enumerate(self.widths):
            stages.append(EncoderStage(prev, width, use_msa, seed, '{}.stage{}'.format(name, ix)))
            prev = width
        self.stages = nn.ModuleList(stages)

    def forward(self, x):
        n_down = len(self.stages)
        if x.shape[-1] % 2 ** n_down or x.shape[-2] % 2 ** n_down:
            raise ConfigurationError('input side must be divisible by {}, got {}x{}'.format(
                2 ** n_down, x.shape[-2], x.shape[-1]))
        skips = []
        for stage in self.stages:
            x = stage(x)
            skips.append(x)
        return skips


def upsample2(x):
    return F.interpolate(x, scale_factor=2, mode='nearest')
