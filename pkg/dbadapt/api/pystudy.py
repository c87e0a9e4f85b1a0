"""
The pystudy submodule is the Monte Carlo harness of dbadapt. A study
fixes one finite population, draws R independent assignment sequences
from a design and evaluates a list of strategies (estimator plus
confidence region) on each sequence. Every strategy sharing the design
sees the same assignment sequence within a replication, and metrics are
computed against the realized finite-population truth.

Strategies:

- ``ipw``: inverse-propensity-weighted estimate with V-hat.
- ``sm``: arm sample means with the Welch covariance.
- ``aipw``: adaptive augmented estimate with V-hat or V-tilde (and their
  b-weighted block forms).
- ``all``: augmented estimate with an outcome model fitted on all units.
- ``cf``: cross-fitted estimate over G folds, with or without a
  Bonferroni correction.
"""

import dataclasses
import functools
import multiprocessing
import pathlib
from dataclasses import dataclass
from typing import Optional

from . import common, pypop, pydesign, pymodel, pyest

import numpy as np
import pandas as pd
from scipy import stats

STRATEGY_KINDS = ['ipw', 'sm', 'aipw', 'all', 'cf']

VARIANCE_KINDS = {
    'vhat': 'vhat_aipw',
    'vtilde': 'vtilde_aipw',
    'vhat_b': 'vhat_aipw_b',
    'vtilde_b': 'vtilde_aipw_b',
}

STUDY_KEYS = ['population', 'design', 'strategies', 'contrast', 'alpha',
              'replications', 'base_seed', 'parallelism', 'baseline_design',
              'name']

QUICK_UNITS = 500
QUICK_BLOCKS = 60
QUICK_REPLICATIONS = 300

@dataclass(frozen=True)
class Strategy:
    """
    One estimator and confidence-region construction.

    Parameters
    ----------
    kind : {'ipw', 'sm', 'aipw', 'all', 'cf'}
        Strategy family.
    model : object, optional
        Outcome model for 'aipw', 'all' and 'cf'.
    variance : {'vhat', 'vtilde', 'vhat_b', 'vtilde_b'}, default: 'vhat'
        Covariance estimator of 'aipw'.
    folds : int, default: 2
        Number of folds of 'cf'.
    bonferroni : bool, default: False
        Whether 'cf' combines Bonferroni-corrected fold intervals.
    label : str, optional
        Name in the outputs.
    """
    kind: str
    model: Optional[object] = None
    variance: str = 'vhat'
    folds: int = 2
    bonferroni: bool = False
    label: Optional[str] = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise common.ConfigError(
                f"Unknown strategy '{self.kind}', expected one of "
                f"{STRATEGY_KINDS}.")
        if self.kind in ('aipw', 'all', 'cf') and self.model is None:
            default = pymodel.OnlineLeastSquares()
            object.__setattr__(self, 'model', default)
        if self.variance not in VARIANCE_KINDS:
            raise common.ConfigError(
                f"Unknown variance '{self.variance}', expected one of "
                f"{sorted(VARIANCE_KINDS)}.")
        if self.kind == 'cf' and int(self.folds) < 2:
            raise common.ConfigError(
                f'Cross-fitting needs at least two folds: {self.folds}')
        if self.label is None:
            object.__setattr__(self, 'label', self.default_label())

    def default_label(self):
        if self.kind in ('ipw', 'sm'):
            return self.kind
        model = pymodel.model_name(self.model)
        if self.kind == 'aipw':
            suffix = '1' if self.variance.startswith('vhat') else '2'
            b = '_b' if self.variance.endswith('_b') else ''
            return f'aipw{suffix}{b}:{model}'
        if self.kind == 'cf':
            return f"cf{'1' if self.bonferroni else '2'}:{model}"
        return f'all:{model}'

    @classmethod
    def from_dict(cls, data):
        """
        Construct Strategy from a config dict or name.

        Examples
        --------

        >>> from dbadapt import pystudy
        >>> pystudy.Strategy.from_dict({'kind': 'aipw', 'model': 'knn', 'variance': 'vtilde'}).label
        'aipw2:knn'
        """
        if isinstance(data, str):
            data = {'kind': data}
        data = dict(data)
        unknown = set(data) - {'kind', 'model', 'variance', 'folds',
                               'bonferroni', 'label'}
        if unknown:
            raise common.ConfigError(
                f'Unknown strategy keys: {sorted(unknown)}')
        if 'kind' not in data:
            raise common.ConfigError("Strategy requires a 'kind'.")
        if data.get('model') is not None:
            data['model'] = pymodel.model_from_dict(data['model'])
        return cls(**data)

    def to_dict(self):
        d = {'kind': self.kind, 'label': self.label}
        if self.model is not None:
            model = dataclasses.asdict(self.model)
            model.pop('outcomes', None)
            d['model'] = {'kind': pymodel.model_name(self.model), **model}
        if self.kind == 'aipw':
            d['variance'] = self.variance
        if self.kind == 'cf':
            d['folds'] = self.folds
            d['bonferroni'] = self.bonferroni
        return d

@dataclass
class Evaluation:
    """Estimate, coverage indicator and region length of one strategy."""
    estimate: np.ndarray
    covered: bool
    length: float

def _crossfit_region(strategy, lf, C, alpha, truth):
    res = pymodel.crossfit_estimate(lf, strategy.folds, strategy.model, C)
    G = len(res.weights)
    projected = np.array([C @ V @ C.T / n for V, n in
                          zip(res.fold_covariances, res.fold_sizes)])
    if strategy.bonferroni:
        q = common.chi2_quantile(1 - alpha / G, 1)
        half = np.sqrt(q * projected[:, 0, 0])
        lower = res.weights @ (res.fold_estimates[:, 0] - half)
        upper = res.weights @ (res.fold_estimates[:, 0] + half)
        covered = bool(lower <= truth[0] <= upper)
        return Evaluation(res.estimate, covered, float(upper - lower))
    cov = np.einsum('g,gij->ij', res.weights ** 2, projected)
    region = pyest.wald_set(res.estimate, cov, alpha)
    return Evaluation(res.estimate, region.contains(truth), region.length)

def evaluate(strategy, lf, C, alpha, truth):
    """
    Evaluate one strategy on one experiment log.

    Parameters
    ----------
    strategy : Strategy
        Strategy to evaluate.
    lf : pypop.LogFrame
        Experiment log (with zero predictions).
    C : numpy.ndarray
        Contrast matrix.
    alpha : float
        Significance level.
    truth : numpy.ndarray
        Finite-population estimand.

    Returns
    -------
    Evaluation
        Estimate, whether the region covers the truth, and its length.
    """
    if strategy.kind == 'cf':
        return _crossfit_region(strategy, lf, C, alpha, truth)
    if strategy.kind == 'sm':
        tau, cov = pyest.sample_mean_estimate(lf, C)
        region = pyest.wald_set(tau, cov, alpha)
    elif strategy.kind == 'all':
        tau, cov = pyest.all_units_estimate(lf, strategy.model, C)
        region = pyest.wald_set(tau, cov, alpha)
    else:
        if strategy.kind == 'ipw':
            estimator, kind = 'ipw', 'vhat_ipw'
        else:
            estimator, kind = 'aipw', VARIANCE_KINDS[strategy.variance]
            lf = lf.with_predictions(
                pymodel.adaptive_predictions(strategy.model, lf))
        report = pyest.infer(lf, C, alpha, estimator, [kind])
        tau, region = report.tau_hat, report.sets[kind]
    return Evaluation(tau, region.contains(truth), region.length)

def _load_population(population, base_dir=None):
    population = dict(population)
    if 'path' in population:
        path = pathlib.Path(population['path'])
        if base_dir is not None and not path.is_absolute():
            path = pathlib.Path(base_dir) / path
        if not path.exists():
            raise common.ConfigError(f'Population file does not exist: {path}')
        return pypop.PopFrame.from_file(path)
    if 'seed' not in population:
        raise common.ConfigError("Population requires a 'seed' or a 'path'.")
    return pypop.generate_population(pypop.DgpSpec.from_dict(population),
                                     population['seed'])

@dataclass(frozen=True, eq=False)
class StudySpec:
    """
    Configuration of a Monte Carlo study.

    Parameters
    ----------
    population : dict
        DGP entries of :class:`pypop.DgpSpec` plus a 'seed', or a 'path'
        to a population CSV.
    design : object
        Design under study.
    strategies : list
        Strategy objects.
    contrast : numpy.ndarray
        Contrast matrix.
    alpha : float, default: 0.05
        Significance level.
    replications : int, default: 1000
        Number of replications R.
    base_seed : int, default: 0
        Replication r uses the generator seeded with [base_seed, r].
    parallelism : int, default: 1
        Number of worker processes.
    baseline_design : object, optional
        Comparator design for :func:`run_srd_comparison`.
    name : str, optional
        Study name.
    base_dir : str, optional
        Directory against which a relative population path is resolved.

    See Also
    --------
    StudySpec.from_file
        Construct StudySpec from a JSON config.
    """
    population: dict
    design: object
    strategies: list
    contrast: np.ndarray
    alpha: float = 0.05
    replications: int = 1000
    base_seed: int = 0
    parallelism: int = 1
    baseline_design: Optional[object] = None
    name: str = 'study'
    base_dir: Optional[str] = None

    def __post_init__(self):
        if int(self.replications) < 1:
            raise common.ConfigError(
                f'Replications must be at least 1: {self.replications}')
        if not self.strategies:
            raise common.ConfigError('Need at least one strategy.')
        labels = [s.label for s in self.strategies]
        if len(set(labels)) != len(labels):
            raise common.ConfigError(f'Strategy labels must be unique: {labels}')
        if not 0 < self.alpha < 1:
            raise common.ConfigError(f'Alpha must lie in (0, 1): {self.alpha}')
        if int(self.parallelism) < 1:
            raise common.ConfigError(
                f'Parallelism must be at least 1: {self.parallelism}')
        if int(self.base_seed) < 0:
            raise common.ConfigError(
                f'Base seed must be nonnegative: {self.base_seed}')
        C = common.check_contrast(self.contrast)
        object.__setattr__(self, 'contrast', C)
        if C.shape[0] > 1 and any(s.kind == 'cf' and s.bonferroni
                                  for s in self.strategies):
            raise common.ConfigError(
                'Bonferroni cross-fitting supports a single contrast row only.')

    @classmethod
    def from_dict(cls, data, base_dir=None):
        """Construct StudySpec from a config dict."""
        unknown = set(data) - set(STUDY_KEYS)
        if unknown:
            raise common.ConfigError(f'Unknown study keys: {sorted(unknown)}')
        for key in ['population', 'design', 'strategies', 'contrast']:
            if key not in data:
                raise common.ConfigError(f"Study config is missing '{key}'.")
        kwargs = {
            'population': dict(data['population']),
            'design': pydesign.design_from_dict(data['design']),
            'strategies': [Strategy.from_dict(s) for s in data['strategies']],
            'contrast': common.parse_contrast(data['contrast']),
            'base_dir': None if base_dir is None else str(base_dir),
        }
        for key in ['alpha', 'replications', 'base_seed', 'parallelism',
                    'name']:
            if key in data:
                kwargs[key] = data[key]
        if data.get('baseline_design') is not None:
            kwargs['baseline_design'] = pydesign.design_from_dict(
                data['baseline_design'])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, fn):
        """Construct StudySpec from a JSON config file."""
        return cls.from_dict(common.read_json(fn),
                             base_dir=pathlib.Path(fn).parent)

    def to_dict(self):
        d = {
            'name': self.name,
            'population': self.population,
            'design': pydesign.design_to_dict(self.design),
            'strategies': [s.to_dict() for s in self.strategies],
            'contrast': self.contrast.tolist(),
            'alpha': self.alpha,
            'replications': self.replications,
            'base_seed': self.base_seed,
            'parallelism': self.parallelism,
        }
        if self.baseline_design is not None:
            d['baseline_design'] = pydesign.design_to_dict(self.baseline_design)
        return d

    def replace(self, **kwargs):
        return dataclasses.replace(self, **kwargs)

    def quick(self):
        """
        Return the reduced-scale version of the study.

        At most 500 units (60 blocks) and 300 replications.
        """
        population = dict(self.population)
        if 'path' not in population:
            dgp = pypop.DgpSpec.from_dict(population).scaled(
                QUICK_UNITS, QUICK_BLOCKS)
            population.update(dgp.to_dict())
        return self.replace(
            population=population,
            replications=min(self.replications, QUICK_REPLICATIONS))

    def load_population(self):
        """Return the fixed population of the study."""
        return _load_population(self.population, self.base_dir)

def _replicate(spec, pf, truth, design, r):
    """Run replication r and return its rows."""
    try:
        rng = np.random.default_rng([spec.base_seed, r])
        lf = pydesign.run_design(pf, design, rng)
        diag = pyest.diagnostics(lf, pf)
        z_hash = lf.assignment_hash()
        rows = []
        for strategy in spec.strategies:
            ev = evaluate(strategy, lf, spec.contrast, spec.alpha, truth)
            row = {
                'strategy': strategy.label,
                'replication': r,
                'covered': bool(ev.covered),
                'length': ev.length,
                'z_hash': z_hash,
                'min_prob': diag.realized_min_prob,
                'lindeberg_proxy': diag.lindeberg_proxy,
            }
            for q, value in enumerate(np.atleast_1d(ev.estimate - truth)):
                row['deviation' if q == 0 else f'deviation_{q+1}'] = value
            rows.append(row)
        return rows
    except (ValueError, np.linalg.LinAlgError) as e:
        raise type(e)(f'replication {r} (seed [{spec.base_seed}, {r}]) '
                      f'failed: {e}') from e
    except Exception as e:
        raise RuntimeError(f'replication {r} (seed [{spec.base_seed}, {r}]) '
                           f'failed: {e}') from e

def _deviation_columns(df):
    return [c for c in df.columns if c.startswith('deviation')]

def _summarize(rows, strategies):
    records = []
    for label in strategies:
        df = rows[rows['strategy'] == label]
        columns = _deviation_columns(df)
        d = df[columns].to_numpy()
        names = (['bias'] if len(columns) == 1
                 else [f'bias_{q+1}' for q in range(len(columns))])
        for name, value in zip(names, d.mean(axis=0)):
            records.append((label, name, float(value)))
        records.append((label, 'mse', float(np.mean(np.sum(d ** 2, axis=1)))))
        names = [n.replace('bias', 'skewness') for n in names]
        for name, col in zip(names, d.T):
            value = stats.skew(col) if len(col) > 2 else np.nan
            records.append((label, name, float(value)))
        records.append((label, 'coverage', float(df['covered'].mean())))
        records.append((label, 'length', float(df['length'].mean())))
        records.append((label, 'replications', float(len(df))))
    return pd.DataFrame(records, columns=['strategy', 'metric', 'value'])

@dataclass
class StudyResult:
    """
    Result of :func:`run_study`.

    Attributes
    ----------
    spec : StudySpec
        Study configuration.
    truth : numpy.ndarray
        Finite-population estimand.
    rows : pandas.DataFrame
        One row per (replication, strategy).
    summary : pandas.DataFrame
        Columns 'strategy', 'metric', 'value'; metrics are bias, mse,
        skewness, coverage, length and replications (bias and skewness
        are per coordinate when the contrast has several rows).
    """
    spec: StudySpec
    truth: np.ndarray
    rows: pd.DataFrame
    summary: pd.DataFrame

    def metric(self, strategy, name):
        """Return one summary value."""
        s = self.summary
        match = s[(s['strategy'] == strategy) & (s['metric'] == name)]
        if match.empty:
            raise KeyError(f'No metric {name!r} for strategy {strategy!r}.')
        return float(match['value'].iloc[0])

    @property
    def deviations(self):
        """pandas.DataFrame : Per-replication deviations of every strategy."""
        columns = ['strategy', 'replication'] + _deviation_columns(self.rows)
        return self.rows[columns]

    def to_dict(self):
        summary = {}
        for _, r in self.summary.iterrows():
            summary.setdefault(r['strategy'], {})[r['metric']] = r['value']
        return {'spec': self.spec.to_dict(), 'truth': self.truth.tolist(),
                'summary': summary}

def run_study(spec, pf=None, design=None):
    """
    Run a Monte Carlo study.

    Parameters
    ----------
    spec : StudySpec
        Study configuration.
    pf : pypop.PopFrame, optional
        Population; loaded from the study when omitted.
    design : object, optional
        Design overriding ``spec.design``.

    Returns
    -------
    StudyResult
        Per-replication rows and summary metrics. Results do not depend
        on the parallelism level.
    """
    if pf is None:
        pf = spec.load_population()
    if design is None:
        design = spec.design
    C = common.check_contrast(spec.contrast, pf.num_arms)
    truth = pf.true_estimand(C)
    func = functools.partial(_replicate, spec, pf, truth, design)
    R = int(spec.replications)
    if spec.parallelism > 1:
        with multiprocessing.Pool(spec.parallelism) as pool:
            chunks = pool.map(func, range(R))
    else:
        chunks = [func(r) for r in range(R)]
    rows = pd.DataFrame([row for chunk in chunks for row in chunk])
    summary = _summarize(rows, [s.label for s in spec.strategies])
    return StudyResult(spec, truth, rows, summary)

@dataclass
class ComparisonResult:
    """
    Result of :func:`run_srd_comparison`.

    Attributes
    ----------
    design : StudyResult
        Study under the configured design.
    baseline : StudyResult
        Study under the baseline design.
    comparison : pandas.DataFrame
        Columns 'strategy', 'metric', 'value' with RMSE, coverage and
        length under both designs and the percent reductions.
    """
    design: StudyResult
    baseline: StudyResult
    comparison: pd.DataFrame

    @property
    def summary(self):
        a = self.design.summary.assign(
            strategy='design:' + self.design.summary['strategy'])
        b = self.baseline.summary.assign(
            strategy='baseline:' + self.baseline.summary['strategy'])
        return pd.concat([a, b, self.comparison], ignore_index=True)

    @property
    def rows(self):
        a = self.design.rows.assign(
            strategy='design:' + self.design.rows['strategy'])
        b = self.baseline.rows.assign(
            strategy='baseline:' + self.baseline.rows['strategy'])
        return pd.concat([a, b], ignore_index=True)

    @property
    def deviations(self):
        rows = self.rows
        return rows[['strategy', 'replication'] + _deviation_columns(rows)]

    def reduction(self, strategy, name):
        c = self.comparison
        match = c[(c['strategy'] == strategy)
                  & (c['metric'] == f'{name}_reduction')]
        return float(match['value'].iloc[0])

    def to_dict(self):
        comparison = {}
        for _, r in self.comparison.iterrows():
            comparison.setdefault(r['strategy'], {})[r['metric']] = r['value']
        return {'design': self.design.to_dict(),
                'baseline': self.baseline.to_dict(),
                'comparison': comparison}

def run_srd_comparison(spec, pf=None):
    """
    Compare the study design with its baseline on one fixed population.

    Both designs use the same population and the same replication seeds.
    Without a ``baseline_design`` the baseline is blocked complete
    randomization with the design's number of treated units per block.

    Parameters
    ----------
    spec : StudySpec
        Study configuration, typically sequential rerandomization.
    pf : pypop.PopFrame, optional
        Population; loaded from the study when omitted.

    Returns
    -------
    ComparisonResult
        Paired results and percent reductions (100 * (1 - design /
        baseline)) of RMSE and region length.
    """
    if pf is None:
        pf = spec.load_population()
    baseline = spec.baseline_design
    if baseline is None:
        treated = getattr(spec.design, 'treated_per_block', None)
        if treated is None:
            raise common.ConfigError(
                'A baseline design is required for this design.')
        baseline = pydesign.CompleteRandomization(treated)
    first = run_study(spec, pf)
    second = run_study(spec, pf, baseline)
    records = []
    for s in spec.strategies:
        label = s.label
        rmse = [np.sqrt(r.metric(label, 'mse')) for r in (first, second)]
        length = [r.metric(label, 'length') for r in (first, second)]
        coverage = [r.metric(label, 'coverage') for r in (first, second)]
        records += [
            (label, 'rmse_design', rmse[0]),
            (label, 'rmse_baseline', rmse[1]),
            (label, 'rmse_reduction', 100 * (1 - rmse[0] / rmse[1])),
            (label, 'coverage_design', coverage[0]),
            (label, 'coverage_baseline', coverage[1]),
            (label, 'length_design', length[0]),
            (label, 'length_baseline', length[1]),
            (label, 'length_reduction', 100 * (1 - length[0] / length[1])),
        ]
    comparison = pd.DataFrame(records, columns=['strategy', 'metric', 'value'])
    return ComparisonResult(first, second, comparison)

def summarize_to_csv(result, fn):
    """Write the summary table (strategy, metric, value) as CSV."""
    result.summary.to_csv(fn, index=False, lineterminator='\n',
                          float_format='%.17g')

def emit_plot_data(result, fn):
    """
    Write per-replication deviations as CSV.

    Columns are strategy, replication and deviation (plus deviation_2,
    ... for multi-row contrasts), enough to draw the distribution of the
    estimation error of every strategy with an external tool.
    """
    result.deviations.to_csv(fn, index=False, lineterminator='\n',
                             float_format='%.17g')

def write_report(result, fn):
    """Write the JSON report of a study or comparison."""
    common.write_json(result.to_dict(), fn)
