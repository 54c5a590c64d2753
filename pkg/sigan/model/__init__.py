"""Generator, discriminator and the checkpoint container."""
from sigan.model.batch import TensorBatch, collate
from sigan.model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from sigan.model.discriminator import Discriminator
from sigan.model.generator import (BottleneckSplit, Generator, GeneratorOutput,
                                   illumination_exchange, split_bottleneck)
from sigan.model.layers import MSABlock
