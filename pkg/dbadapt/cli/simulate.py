import sys
import pathlib

from .. import api

description = """
Run a Monte Carlo study from a JSON config.

The study draws R assignment sequences from the design on one fixed
population and evaluates every strategy on each sequence. Three files are
written to the output directory: summary.csv (strategy, metric, value),
deviations.csv (strategy, replication, deviation) and report.json.

If the config has a 'baseline_design', the design is compared with the
baseline on the same population and seeds (e.g. sequential rerandomization
against complete randomization) and the summary also lists RMSE and length
reductions.
"""

epilog = f"""
[Example] Run a study:
  $ dbadapt {api.common._script_name()} data/config/table1.json --out table1

[Example] Run a reduced-scale version with four workers:
  $ dbadapt {api.common._script_name()} data/config/srd.json --out srd \\
  --quick --parallelism 4
"""

def create_parser(subparsers):
    parser = api.common._add_parser(
        subparsers,
        api.common._script_name(),
        description=description,
        epilog=epilog,
        help='Run a Monte Carlo study from a JSON config.',
    )
    parser.add_argument(
        'config',
        help='Study config file (.json).'
    )
    parser.add_argument(
        '--out',
        metavar='PATH',
        default='.',
        help=
"""Output directory, created if missing (default: current
directory)."""
    )
    parser.add_argument(
        '--seed',
        metavar='INT',
        type=int,
        help="Base seed overriding the config's 'base_seed'."
    )
    parser.add_argument(
        '--replications',
        metavar='INT',
        type=int,
        help="Number of replications overriding the config."
    )
    parser.add_argument(
        '--quick',
        action='store_true',
        help=
"""Use this flag to run at reduced scale: at most 500 units
(60 blocks) and 300 replications (default: False)."""
    )
    parser.add_argument(
        '--parallelism',
        metavar='INT',
        type=int,
        help=
"""Number of worker processes overriding the config. Results
do not depend on this value."""
    )

def main(args):
    spec = api.pystudy.StudySpec.from_file(args.config)
    if args.quick:
        spec = spec.quick()
    overrides = {}
    if args.seed is not None:
        overrides['base_seed'] = args.seed
    if args.replications is not None:
        overrides['replications'] = args.replications
    if args.parallelism is not None:
        overrides['parallelism'] = args.parallelism
    if overrides:
        spec = spec.replace(**overrides)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sys.stderr.write(f"Running '{spec.name}' with {spec.replications} "
                     f"replications.\n")
    if spec.baseline_design is not None:
        result = api.pystudy.run_srd_comparison(spec)
    else:
        result = api.pystudy.run_study(spec)
    api.pystudy.summarize_to_csv(result, out / 'summary.csv')
    api.pystudy.emit_plot_data(result, out / 'deviations.csv')
    api.pystudy.write_report(result, out / 'report.json')
    sys.stderr.write(f'Results written to {out}.\n')
