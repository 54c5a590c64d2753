'''
SIGAN: Shadow and Illumination harmonization GAN

Procedural six-tuple generation, the two-branch relighting generator,
its discriminator, training and evaluation.

License: MIT
'''

__all__ = [
    'core',
    'utils',
    'scene',
    'model',
    'losses',
    'train',
    'evaluate',
]
