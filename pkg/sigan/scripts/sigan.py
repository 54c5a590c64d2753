#!/usr/bin/env python
# pylint: disable=broad-except
"""sigan.py: command line entry point (gen, stats, train, eval, infer)."""
import logging
import sys
import traceback

from sigan.scripts import eval as eval_cmd
from sigan.scripts import gen, infer, stats, train
from sigan.scripts.common import (EXIT_DATA, EXIT_RUNTIME, EXIT_USAGE, ArgumentParser, CommandResult,
                                  UsageError)
from sigan.utils import ConfigurationError, DatasetError, SiganError, configure_logging

__all__ = ['COMMANDS', 'build_parser', 'execute', 'main']

log = logging.getLogger('sigan.scripts')

COMMANDS = (gen, stats, train, eval_cmd, infer)


def build_parser():
    """Parser with one subparser per command."""

    parser = ArgumentParser(prog='sigan', description='Object illumination harmonization toolkit')
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND', parser_class=ArgumentParser)
    subparsers.required = True
    for command in COMMANDS:
        command.add_parser(subparsers)
    return parser


def execute(args):
    """Runs a parsed command and maps failures to exit codes.

    Returns:
        CommandResult
    """

    try:
        return args.run(args)
    except ConfigurationError as e:
        return CommandResult(EXIT_USAGE, 'Configuration error: {}'.format(e))
    except DatasetError as e:
        return CommandResult(EXIT_DATA, 'Data error: {}'.format(e))
    except SiganError as e:
        return CommandResult(EXIT_RUNTIME, 'Error: {}'.format(e))
    except Exception as e:
        log.debug(traceback.format_exc())
        return CommandResult(EXIT_RUNTIME, 'Unexpected error: {!r}'.format(e))


def main(argv=None):
    """Parses argv, runs the subcommand and returns its exit code."""

    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(e.usage)
        sys.stderr.write('sigan: error: {}\n'.format(e))
        return EXIT_USAGE

    configure_logging(args.quiet)
    log.info('Start %s ...', args.command)
    result = execute(args)
    if result.exit_code:
        log.error(result.message)
    else:
        log.info(result.message)
        log.info('Done.')
    return result.exit_code


if __name__ == '__main__':
    sys.exit(main())
