#!/usr/bin/env python
# pylint: disable=invalid-name
"""setup.py for SIGAN"""

from setuptools import setup, find_packages

import _version

setup(
    name='sigan',
    description='Shadow and illumination harmonization GAN for inserted objects',
    version=_version.__version__,
    long_description='''Desk-scale toolkit for object illumination harmonization: a procedural six-tuple dataset generator, a two-branch generator with multi-scale attention and illumination exchange, an adversarial discriminator, the training loop and an evaluation/ablation kit.''',
    entry_points={
        'console_scripts':[
            'sigan=sigan.scripts.sigan:main',
        ]
    },
    packages=find_packages(exclude=['tests']),
    include_package_data=True,
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Programming Language :: Python :: 3',
    ],
    setup_requires=['pytest-runner'],
    tests_require=['pytest'],
    install_requires=[
        'numpy>=1.17',
        'h5py>=2.9',
        'pandas>=0.24',
        'progress>=1.5',
        'torch>=1.10',
        'Pillow>=7',
        'matplotlib>=3',
    ],
    python_requires='>=3.7, <4',
)
