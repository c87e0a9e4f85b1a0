import sys
import argparse

import numpy as np

from .version import __version__
from .cli import commands
from .api.common import ConfigError, DegeneracyError

def _fail(command, e, code):
    message = ' '.join(str(e).split())
    sys.stderr.write(f'dbadapt {command}: error: {message}\n')
    return code

def main(argv=None):
    parser = argparse.ArgumentParser(
        prog='dbadapt',
        add_help=False,
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument(
        '-h',
        '--help',
        action='help',
        default=argparse.SUPPRESS,
        help='Show this help message and exit.',
    )
    parser.add_argument(
        '-v',
        '--version',
        action='version',
        version=f'%(prog)s {__version__}',
        help='Show the version number and exit.'
    )
    subparsers = parser.add_subparsers(
        dest='command',
        metavar='COMMAND',
        required=True,
    )
    for name, command in commands.items():
        command.create_parser(subparsers)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    # DegeneracyError subclasses ValueError, so it is caught first.
    try:
        code = commands[args.command].main(args)
    except (DegeneracyError, np.linalg.LinAlgError) as e:
        return _fail(args.command, e, 3)
    except (ConfigError, FileNotFoundError, ValueError) as e:
        return _fail(args.command, e, 2)
    return 0 if code is None else code

if __name__ == '__main__':
    sys.exit(main())
