"""
HDF5 checkpoint container.

One file per checkpoint. Tensors are stored as datasets, the header as a JSON
string in the root attribute 'header'. See docs/checkpoint.md for the layout.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, NamedTuple, Optional

import h5py # pylint: disable=import-error
import numpy as np
import torch

from sigan.core import ModelConfig
from sigan.utils import CheckpointMismatchError, MalformedSidecarError, MissingFileError, digest, to_plain

__all__ = [
    'CHECKPOINT_FORMAT',
    'Checkpoint',
    'data_digest',
    'save_checkpoint',
    'load_checkpoint',
    'restore_module',
    'restore_optimizer',
]

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'sigan-checkpoint-1'


class Checkpoint(NamedTuple):
    """Contents of a checkpoint file."""
    header: Dict[str, Any]
    generator: Dict[str, torch.Tensor]
    discriminator: Dict[str, torch.Tensor]
    optim_g: Optional[Dict[str, Any]]
    optim_d: Optional[Dict[str, Any]]

    @property
    def model_config(self):
        return ModelConfig.from_dict(self.header['model_config'])

    @property
    def step(self):
        return int(self.header.get('step', 0))


def data_digest(image_side, envmap_shape):
    """Digest of the dataset properties a model is bound to."""

    return digest({'image_side': int(image_side), 'envmap_shape': [int(x) for x in envmap_shape]})


def _write_state(group, state):
    names = []
    shapes = []
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy()
        if arr.dtype == np.float64:
            arr = arr.astype(np.float32)
        group.create_dataset(name, data=arr)
        names.append(name)
        shapes.append(list(arr.shape))
    return names, shapes


def _write_optimizer(group, optim_state):
    for key, slots in optim_state['state'].items():
        sub = group.create_group(str(key))
        for slot, value in slots.items():
            is_tensor = torch.is_tensor(value)
            arr = value.detach().cpu().numpy() if is_tensor else np.asarray(value)
            ds = sub.create_dataset(slot, data=arr)
            ds.attrs['is_tensor'] = is_tensor
    return to_plain(optim_state['param_groups'])


def save_checkpoint(path, generator, discriminator, optim_g=None, optim_d=None,
                    data_digest_=None, train_config=None, step=0, rolling=None):
    """Writes generator/discriminator (and optimiser) state to an HDF5 file.

    Args:
        path: target file
        generator: Generator
        discriminator: Discriminator
        optim_g: generator optimiser (optional)
        optim_d: discriminator optimiser (optional)
        data_digest_: digest of the training data properties
        train_config: TrainConfig (optional)
        step: number of completed training steps
        rolling: rolling loss averages

    Returns:
        Path of the written file
    """

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + '.tmp')

    header = {
        'format': CHECKPOINT_FORMAT,
        'model_config': generator.config.to_dict(),
        'config_digest': generator.config.digest(),
        'data_digest': data_digest_,
        'train_config': to_plain(train_config) if train_config is not None else None,
        'seed': generator.seed,
        'step': int(step),
        'rolling': to_plain(rolling or {}),
    }

    with h5py.File(str(tmp), 'w') as h5f:
        for key, module in (('generator', generator), ('discriminator', discriminator)):
            names, shapes = _write_state(h5f.create_group(key), module.state_dict())
            header[key] = {'names': names, 'shapes': shapes}
        for key, optim in (('optim_g', optim_g), ('optim_d', optim_d)):
            if optim is not None:
                header[key] = {'param_groups': _write_optimizer(h5f.create_group(key), optim.state_dict())}
        h5f.attrs['header'] = json.dumps(header, sort_keys=True)

    tmp.replace(path)
    log.debug('Wrote checkpoint %s (step %s)', path, step)
    return path


def _read_state(group, names):
    return {name: torch.from_numpy(np.array(group[name])) for name in names}


def _read_optimizer(group, param_groups):
    state = {}
    for key in sorted(group.keys(), key=int):
        slots = {}
        for slot, ds in group[key].items():
            arr = np.array(ds)
            if ds.attrs.get('is_tensor', True):
                slots[slot] = torch.from_numpy(arr)
            else:
                slots[slot] = arr.item()
        state[int(key)] = slots
    return {'state': state, 'param_groups': param_groups}


def load_checkpoint(path):
    """Reads a checkpoint file.

    Raises:
        MissingFileError: file not found
        MalformedSidecarError: header missing or not a sigan checkpoint
    """

    path = Path(path)
    if not path.exists():
        raise MissingFileError(path, 'checkpoint not found')
    try:
        with h5py.File(str(path), 'r') as h5f:
            header = json.loads(h5f.attrs['header'])
            if header.get('format') != CHECKPOINT_FORMAT:
                raise MalformedSidecarError(path, 'unknown checkpoint format {!r}'.format(header.get('format')))
            generator = _read_state(h5f['generator'], header['generator']['names'])
            discriminator = _read_state(h5f['discriminator'], header['discriminator']['names'])
            optim = {}
            for key in ('optim_g', 'optim_d'):
                optim[key] = _read_optimizer(h5f[key], header[key]['param_groups']) if key in header else None
    except (OSError, KeyError, ValueError) as e:
        raise MalformedSidecarError(path, 'unreadable checkpoint ({})'.format(e))

    if header['config_digest'] != ModelConfig.from_dict(header['model_config']).digest():
        raise CheckpointMismatchError(path, 'config digest {} does not match the stored model config'.format(
            header['config_digest']))

    return Checkpoint(header=header, generator=generator, discriminator=discriminator,
                      optim_g=optim['optim_g'], optim_d=optim['optim_d'])


def restore_module(module, state, path='<checkpoint>'):
    """Loads a state dict after checking names and shapes.

    Raises:
        CheckpointMismatchError: names or shapes differ from the module
    """

    own = module.state_dict()
    if set(own) != set(state):
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        raise CheckpointMismatchError(path, 'parameter names differ (missing {}, unexpected {})'.format(
            missing[:3], extra[:3]))
    for name, tensor in own.items():
        if tuple(tensor.shape) != tuple(state[name].shape):
            raise CheckpointMismatchError(path, 'shape of {} is {}, expected {}'.format(
                name, tuple(state[name].shape), tuple(tensor.shape)))
    module.load_state_dict({k: v.to(own[k].dtype) for k, v in state.items()})


def restore_optimizer(optimizer, state):
    if state is not None:
        optimizer.load_state_dict(state)
