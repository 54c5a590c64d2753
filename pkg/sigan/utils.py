# pylint: disable=invalid-name, global-variable-undefined
"""
Utility classes and functions used throughout the SIGAN processing chain.

Error hierarchy, JSON and digest helpers, seeding and the worker
initialisation used for parallel sample rendering.
"""
import hashlib
import json
import logging
import math
import os

import numpy as np

__all__ = [
    'SiganError',
    'ConfigurationError',
    'ContractError',
    'GenerationError',
    'DatasetError',
    'MissingFileError',
    'MalformedSidecarError',
    'ShapeMismatchError',
    'CheckpointMismatchError',
    'TrainingError',
    'to_plain',
    'jdump',
    'jload',
    'jdumps',
    'digest',
    'derive_seed',
    'env_seed',
    'configure_logging',
    'init_parameters',
    'init_worker',
    'worker_parameters',
    ]

LOG_FORMAT = '[%(asctime)s]: %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'

parameters = None


class SiganError(Exception):
    """Base class for all errors raised by sigan."""


class ConfigurationError(SiganError, ValueError):
    """Invalid model, training or generation configuration."""


class ContractError(SiganError, ValueError):
    """Violated precondition of an operation."""


class GenerationError(SiganError):
    """Scene sampling could not satisfy its constraints."""


class DatasetError(SiganError):
    """Problem with an on-disk dataset or artifact."""

    def __init__(self, path, reason):
        """Creates DatasetError instance.

        Args:
            path: offending file or directory
            reason: human readable description
        """

        super(DatasetError, self).__init__('{}: {}'.format(path, reason))
        self.path = str(path)
        self.reason = reason


class MissingFileError(DatasetError):
    """A required file does not exist."""


class MalformedSidecarError(DatasetError):
    """A JSON sidecar or manifest can't be parsed or lacks fields."""


class ShapeMismatchError(DatasetError):
    """Stored array size does not match its recorded shape."""


class CheckpointMismatchError(DatasetError):
    """Checkpoint is not compatible with the dataset or configuration."""


class TrainingError(SiganError):
    """Training can't continue (e.g. non-finite loss)."""


def to_plain(obj):
    """Converts (nested) NamedTuples, tuples and numpy scalars to JSON-able objects.

    Args:
        obj: object to convert

    Returns:
        plain python object
    """

    if hasattr(obj, '_asdict'):
        return {k: to_plain(v) for k, v in obj._asdict().items()}
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(x) for x in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return 'inf' if obj > 0 else '-inf'
    return obj


def jdumps(obj):
    """Canonical JSON string (sorted keys, fixed separators)."""

    return json.dumps(to_plain(obj), sort_keys=True, indent=1, separators=(',', ': '))


def jdump(obj, filename):
    """JSON dump wrapper.

    Args:
        obj: object to be serialized (NamedTuples are converted)
        filename: name of target JSON file
    """

    with open(str(filename), 'w', encoding='utf-8') as fp:
        fp.write(jdumps(obj))
        fp.write('\n')


def jload(filename):
    """JSON load wrapper.

    Args:
        filename: name of JSON file

    Returns:
        Parsed object

    Raises:
        MissingFileError: file doesn't exist
        MalformedSidecarError: file isn't valid JSON
    """

    try:
        with open(str(filename), 'r', encoding='utf-8') as fp:
            return json.load(fp)
    except FileNotFoundError:
        raise MissingFileError(filename, 'file not found')
    except (ValueError, UnicodeDecodeError) as e:
        raise MalformedSidecarError(filename, 'invalid JSON ({})'.format(e))


def digest(obj):
    """SHA-256 hex digest of the canonical JSON form of obj."""

    payload = json.dumps(to_plain(obj), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


def derive_seed(seed, *keys):
    """Derives a 32 bit child seed from a base seed and integer/string keys.

    Args:
        seed: base seed (int)
        keys: additional ints or strings identifying the stream

    Returns:
        integer seed
    """

    entropy = [int(seed) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            key = int(hashlib.sha256(key.encode('utf-8')).hexdigest()[:8], 16)
        entropy.append(int(key) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def env_seed(default=0):
    """Default seed, overridden by the SIGAN_SEED environment variable."""

    value = os.environ.get('SIGAN_SEED')
    if value is None or value == '':
        return default
    try:
        return int(value)
    except ValueError:
        raise ConfigurationError('SIGAN_SEED must be an integer, got {!r}'.format(value))


def configure_logging(quiet=False):
    """Configures the root logger for command line use.

    Args:
        quiet: only show warnings and errors
    """

    logger = logging.getLogger('sigan')
    for handler in [h for h in logger.handlers if getattr(h, '_sigan_cli', False)]:
        logger.removeHandler(handler)

    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT, LOG_DATEFMT))
    handler._sigan_cli = True # pylint: disable=protected-access
    logger.addHandler(handler)
    logger.setLevel(logging.WARNING if quiet else logging.INFO)
    logger.propagate = False


def init_parameters(**kwargs):
    """Initialize parameters for work in pool workers.

    Returns:
         dict with kwargs containing processing parameters for worker
    """

    params = {}
    for key, value in kwargs.items():
        params[key] = value
    return params


def init_worker(parameters_):
    """Initialize pool worker.

    Args:
        parameters_: Dictionary returned by init_parameters
    """

    global parameters
    parameters = parameters_


def worker_parameters():
    """Parameters installed by init_worker in this process."""

    return parameters
