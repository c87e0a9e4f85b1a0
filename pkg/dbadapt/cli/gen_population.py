import sys

from .. import api

description = """
Generate a finite population from a DGP.

Available DGPs:
  linear           T units, Y(1) = 1 + 2x + e1, Y(2) = 1 + 4x + e2.
  rerandomization  blocks of units, Y(1) = Y(2) = 5x + e.
  trend            T units, Y(1) = t + e1, Y(2) = 2t + e2.
  drift            same as trend.

With --noise shared the linear DGP uses e1 = e2 for every unit.

All noise terms and covariates are standard normal.

Each draw depends only on (seed, unit, slot), so a smaller population is
a prefix of a larger one with the same seed.
"""

epilog = f"""
[Example] Write a linear population of 1,000 units:
  $ dbadapt {api.common._script_name()} --dgp linear --size 1000 --seed 1 > pop.csv

[Example] Write 200 blocks of size 8:
  $ dbadapt {api.common._script_name()} --dgp rerandomization --num-blocks 200 \\
  --block-size 8 --seed 1 --out pop.csv
"""

def create_parser(subparsers):
    parser = api.common._add_parser(
        subparsers,
        api.common._script_name(),
        description=description,
        epilog=epilog,
        help='Generate a finite population from a DGP.',
    )
    parser.add_argument(
        '--dgp',
        metavar='TEXT',
        required=True,
        choices=api.pypop.DGP_TAGS,
        help=f"DGP tag (choices: {', '.join(api.pypop.DGP_TAGS)})."
    )
    parser.add_argument(
        '--size',
        metavar='INT',
        type=int,
        help='Number of units for unit DGPs.'
    )
    parser.add_argument(
        '--num-blocks',
        metavar='INT',
        type=int,
        help='Number of blocks for block DGPs.'
    )
    parser.add_argument(
        '--block-size',
        metavar='INT',
        type=int,
        help='Block size for block DGPs.'
    )
    parser.add_argument(
        '--noise',
        metavar='TEXT',
        default='independent',
        choices=api.pypop.NOISE_KINDS,
        help=
"""Noise of the linear DGP: independent e1, e2 or one shared
draw (default: 'independent')."""
    )
    parser.add_argument(
        '--seed',
        metavar='INT',
        type=int,
        default=0,
        help='Random seed (default: 0).'
    )
    parser.add_argument(
        '--out',
        metavar='PATH',
        help='Output CSV file (default: standard output).'
    )

def main(args):
    data = {'tag': args.dgp, 'noise': args.noise}
    for key in ['size', 'num_blocks', 'block_size']:
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    dgp = api.pypop.DgpSpec.from_dict(data)
    pf = api.pypop.generate_population(dgp, args.seed)
    if args.out is None:
        sys.stdout.write(pf.to_string())
    else:
        pf.to_file(args.out)
