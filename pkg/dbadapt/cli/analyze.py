import pathlib

from .. import api

description = """
Analyze an experiment log.

The JSON config names the log CSV (relative to the config file), the
contrast, the significance level, the estimator and the covariance kinds:

  {"log": "1.csv", "contrast": [[-1, 1]], "alpha": 0.05,
   "estimator": "aipw", "kinds": ["vhat_aipw", "vtilde_aipw"]}

The log must carry the assignment probabilities realized at each step
and, for the augmented estimator, the adaptive predictions m1..mK. The
report gives the point estimate, the projected covariances, the interval
bounds of each kind and the path diagnostics.
"""

epilog = f"""
[Example] Analyze a log:
  $ dbadapt {api.common._script_name()} analysis.json --out report.json
"""

ANALYSIS_KEYS = ['log', 'contrast', 'alpha', 'estimator', 'kinds']

def create_parser(subparsers):
    parser = api.common._add_parser(
        subparsers,
        api.common._script_name(),
        description=description,
        epilog=epilog,
        help='Analyze an experiment log.',
    )
    parser.add_argument(
        'config',
        help='Analysis config file (.json).'
    )
    parser.add_argument(
        '--out',
        metavar='PATH',
        default='report.json',
        help="Output JSON report (default: 'report.json')."
    )

def main(args):
    config = api.common.read_json(args.config)
    unknown = set(config) - set(ANALYSIS_KEYS)
    if unknown:
        raise api.common.ConfigError(
            f'Unknown analysis keys: {sorted(unknown)}')
    for key in ['log', 'contrast']:
        if key not in config:
            raise api.common.ConfigError(
                f"Analysis config is missing '{key}'.")
    path = pathlib.Path(config['log'])
    if not path.is_absolute():
        path = pathlib.Path(args.config).parent / path
    if not path.exists():
        raise api.common.ConfigError(f'Log file does not exist: {path}')
    lf = api.pypop.LogFrame.from_file(path)
    estimator = config.get('estimator', 'aipw')
    if estimator not in ('ipw', 'aipw'):
        raise api.common.ConfigError(f"Unknown estimator '{estimator}'.")
    kinds = config.get('kinds')
    if kinds is not None:
        bad = set(kinds) - set(api.pyest.COVARIANCE_KINDS)
        if bad:
            raise api.common.ConfigError(
                f'Unknown covariance kinds: {sorted(bad)}')
    report = api.pyest.infer(
        lf, api.common.parse_contrast(config['contrast']),
        alpha=config.get('alpha', 0.05), estimator=estimator, kinds=kinds)
    report.to_file(args.out)
