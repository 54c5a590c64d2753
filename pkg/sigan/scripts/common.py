"""Shared pieces of the sigan subcommands."""
import argparse
import logging
from typing import NamedTuple

from sigan.utils import env_seed

__all__ = [
    'EXIT_OK',
    'EXIT_USAGE',
    'EXIT_DATA',
    'EXIT_RUNTIME',
    'CommandResult',
    'UsageError',
    'ArgumentParser',
    'add_common_flags',
    'resolve_seed',
    'parse_shape',
]

log = logging.getLogger('sigan.scripts')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class CommandResult(NamedTuple):
    """Outcome of a subcommand."""
    exit_code: int
    message: str

    @classmethod
    def ok(cls, message):
        return cls(EXIT_OK, message)


class UsageError(Exception):
    """Invalid command line."""

    def __init__(self, message, usage=''):
        super(UsageError, self).__init__(message)
        self.usage = usage


class ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser raising UsageError instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(message, self.format_usage())


def add_common_flags(parser):
    parser.add_argument('--seed', help='Random seed (default: $SIGAN_SEED or 0)', type=int, metavar='N')
    parser.add_argument('--quiet', help='Be quiet', action='store_true')


def resolve_seed(value, default=None):
    """Seed from the command line, else default, else $SIGAN_SEED (or 0)."""

    if value is not None:
        return int(value)
    if default is not None:
        return int(default)
    return env_seed(0)


def parse_shape(value):
    """Parses 'HxW' into an (H, W) tuple."""

    try:
        h, w = (int(x) for x in value.lower().split('x'))
    except ValueError:
        raise argparse.ArgumentTypeError('expected HxW, e.g. 16x32, got {!r}'.format(value))
    return (h, w)
