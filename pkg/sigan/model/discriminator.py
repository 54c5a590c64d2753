"""
Image/mask discriminator.

Six convolutional stages with instance normalisation on the concatenation of
an image and its object mask, a 1-channel sigmoid map and global average
pooling to one probability per sample.
"""
import torch
from torch import nn

from sigan.model.batch import as_mask_tensor
from sigan.model.layers import seeded

__all__ = ['Discriminator', 'stage_strides']

N_STAGES = 6
MIN_STRIDED_SIDE = 8
MAX_DISC_CHANNELS = 256


def stage_strides(side, n_stages=N_STAGES):
    """Stride per stage: 2 while the input of the stage is at least 8 wide, else 1."""

    strides = []
    for _ in range(n_stages):
        if side >= MIN_STRIDED_SIDE:
            strides.append(2)
            side //= 2
        else:
            strides.append(1)
    return strides


class Discriminator(nn.Module):
    """Probability that an image/mask pair is a real harmonized image."""

    def __init__(self, config, seed=0):
        """Creates the discriminator.

        Args:
            config: ModelConfig (image_side and disc_channels are used)
            seed: parameter initialisation seed
        """

        super(Discriminator, self).__init__()
        self.image_side = config.image_side
        stages = []
        prev = 4
        for ix, stride in enumerate(stage_strides(config.image_side)):
            width = min(config.disc_channels * 2 ** ix, MAX_DISC_CHANNELS)
            kernel = 4 if stride == 2 else 3
            with seeded(seed, 'discriminator.stage{}'.format(ix)):
                stages.append(nn.Sequential(
                    nn.Conv2d(prev, width, kernel_size=kernel, stride=stride, padding=1),
                    nn.InstanceNorm2d(width),
                    nn.ReLU(inplace=False),
                ))
            prev = width
        self.stages = nn.Sequential(*stages)
        with seeded(seed, 'discriminator.head'):
            self.head = nn.Conv2d(prev, 1, kernel_size=3, padding=1)

    def forward(self, image, mask):
        """Scores a batch.

        Args:
            image: (B, 3, S, S)
            mask: (B, 1, S, S) or (B, S, S)

        Returns:
            (B,) tensor with values in (0, 1)
        """

        x = torch.cat([image, as_mask_tensor(mask)], dim=1)
        return torch.sigmoid(self.head(self.stages(x))).mean(dim=(1, 2, 3))
