"""
The pypop submodule holds the finite-population data model. It implements
``pypop.PopFrame``, a fixed table of potential outcomes and covariates
(optionally grouped into blocks), ``pypop.LogFrame``, the record of one
adaptive experiment run on such a population, and ``pypop.HistoryView``,
the information available to a design or an outcome model before unit (or
group) t is assigned. It also provides the data-generating processes used
by the simulation studies and CSV input/output for populations and logs.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Optional

from . import common

import numpy as np
import pandas as pd

DGP_TAGS = ['linear', 'rerandomization', 'trend', 'drift']

NOISE_KINDS = ['independent', 'shared']

CSV_FLOAT_FORMAT = '%.17g'

def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a

def _normal(seed, unit, slot):
    """Return one standard normal keyed by (seed, unit, slot)."""
    return np.random.default_rng([seed, unit, slot]).standard_normal()

@dataclass(frozen=True)
class DgpSpec:
    """
    Data-generating process of a simulated finite population.

    Parameters
    ----------
    tag : {'linear', 'rerandomization', 'trend', 'drift'}
        Model name. 'linear' draws X ~ N(0, 1), Y(1) = 1 + 2X + e1 and
        Y(2) = 1 + 4X + e2. 'rerandomization' draws Y(1) = Y(2) = 5X + e
        in blocks. 'trend' and 'drift' draw Y_t(1) ~ N(t, 1) and
        Y_t(2) ~ N(2t, 1) without covariates.
    size : int, optional
        Number of units T (all tags except 'rerandomization').
    num_blocks : int, optional
        Number of blocks ('rerandomization' only).
    block_size : int, optional
        Units per block ('rerandomization' only).
    noise : {'independent', 'shared'}, default: 'independent'
        Whether e1 and e2 are independent or one common draw
        ('linear' only). With shared noise the residual effect
        e2 - e1 is zero for every unit.
    """
    tag: str
    size: Optional[int] = None
    num_blocks: Optional[int] = None
    block_size: Optional[int] = None
    noise: str = 'independent'

    def __post_init__(self):
        if self.tag not in DGP_TAGS:
            raise common.ConfigError(
                f"Unknown DGP tag '{self.tag}', expected one of {DGP_TAGS}.")
        if self.noise not in NOISE_KINDS:
            raise common.ConfigError(
                f"Unknown noise '{self.noise}', expected one of {NOISE_KINDS}.")
        if self.noise != 'independent' and self.tag != 'linear':
            raise common.ConfigError(
                f"Noise '{self.noise}' is only available for the linear DGP.")
        if self.tag == 'rerandomization':
            for name in ['num_blocks', 'block_size']:
                value = getattr(self, name)
                if value is None or int(value) < 1:
                    raise common.ConfigError(
                        f"DGP '{self.tag}' requires a positive '{name}'.")
            if self.block_size < 2:
                raise common.ConfigError(
                    'Blocks must contain at least two units.')
        elif self.size is None or int(self.size) < 1:
            raise common.ConfigError(
                f"DGP '{self.tag}' requires a positive 'size'.")

    @property
    def num_units(self):
        if self.tag == 'rerandomization':
            return self.num_blocks * self.block_size
        return self.size

    @classmethod
    def from_dict(cls, data):
        """Construct DgpSpec from a dict such as ``{'tag': 'linear', 'size': 2000}``."""
        data = dict(data)
        data.pop('seed', None)
        data.pop('path', None)
        unknown = set(data) - {'tag', 'size', 'num_blocks', 'block_size',
                               'noise'}
        if unknown:
            raise common.ConfigError(
                f'Unknown DGP keys: {sorted(unknown)}')
        if 'tag' not in data:
            raise common.ConfigError("DGP requires a 'tag'.")
        return cls(**data)

    def to_dict(self):
        d = {'tag': self.tag}
        for name in ['size', 'num_blocks', 'block_size']:
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        if self.noise != 'independent':
            d['noise'] = self.noise
        return d

    def scaled(self, max_units=None, max_blocks=None):
        """Return a copy capped at a number of units or blocks."""
        if self.tag == 'rerandomization':
            if max_blocks is None or self.num_blocks <= max_blocks:
                return self
            return DgpSpec(self.tag, num_blocks=max_blocks,
                           block_size=self.block_size)
        if max_units is None or self.size <= max_units:
            return self
        return DgpSpec(self.tag, size=max_units, noise=self.noise)

def generate_population(dgp, seed):
    """
    Draw a fixed finite population from a data-generating process.

    Every normal variate is keyed by (seed, unit, slot), so the realized
    population does not depend on the order in which values are generated.

    Parameters
    ----------
    dgp : DgpSpec or dict
        Data-generating process.
    seed : int
        Nonnegative seed.

    Returns
    -------
    PopFrame
        Generated population.

    Examples
    --------

    >>> from dbadapt import pypop
    >>> pf = pypop.generate_population({'tag': 'trend', 'size': 200}, 1)
    >>> pf.num_units, pf.num_arms, pf.num_covariates
    (200, 2, 0)
    """
    if isinstance(dgp, dict):
        dgp = DgpSpec.from_dict(dgp)
    seed = int(seed)
    if seed < 0:
        raise common.ConfigError(f'Seed must be nonnegative: {seed}')
    T = dgp.num_units
    units = range(1, T + 1)
    if dgp.tag == 'linear':
        x = np.array([_normal(seed, t, 0) for t in units])
        e1 = np.array([_normal(seed, t, 1) for t in units])
        if dgp.noise == 'shared':
            e2 = e1
        else:
            e2 = np.array([_normal(seed, t, 2) for t in units])
        outcomes = np.column_stack([1 + 2 * x + e1, 1 + 4 * x + e2])
        covariates = x[:, np.newaxis]
        block_sizes = None
    elif dgp.tag == 'rerandomization':
        x = np.array([_normal(seed, t, 0) for t in units])
        e = np.array([_normal(seed, t, 1) for t in units])
        y = 5 * x + e
        outcomes = np.column_stack([y, y])
        covariates = x[:, np.newaxis]
        block_sizes = [dgp.block_size] * dgp.num_blocks
    else:
        t = np.arange(1, T + 1, dtype=float)
        e1 = np.array([_normal(seed, u, 1) for u in units])
        e2 = np.array([_normal(seed, u, 2) for u in units])
        outcomes = np.column_stack([t + e1, 2 * t + e2])
        covariates = np.empty((T, 0))
        block_sizes = None
    return PopFrame(outcomes, covariates, block_sizes)

def _check_blocks(labels):
    """Return block sizes from a block column, checking contiguity."""
    labels = np.asarray(labels)
    starts = np.flatnonzero(np.r_[True, labels[1:] != labels[:-1]])
    runs = labels[starts]
    if len(set(runs.tolist())) != len(runs) or np.any(np.diff(runs) <= 0):
        raise common.ConfigError(
            'Block column must form contiguous groups in increasing order.')
    return np.diff(np.r_[starts, len(labels)]).tolist()

def _check_units(df):
    """Check that the unit column numbers the rows 1..T in order."""
    units = _numeric(df, ['unit'])[:, 0]
    expected = np.arange(1, len(df) + 1)
    if not np.array_equal(units, expected):
        bad = int(np.flatnonzero(units != expected)[0])
        raise common.ConfigError(
            f"Unit column must number the rows 1..{len(df)} in order; row "
            f"{bad + 1} has unit '{df['unit'].iloc[bad]}'.")

def _numeric(df, columns):
    """Return the given columns as a float array."""
    try:
        # Python's float() parsing is correctly rounded, which keeps
        # 17-digit values exact on reread.
        a = df[columns].astype(float).to_numpy()
    except (ValueError, TypeError) as e:
        raise common.ConfigError(f'Non-numeric cell: {e}')
    if np.isnan(a).any():
        raise common.ConfigError('Ragged row or empty cell in CSV body.')
    return a

def _read_csv(fn):
    try:
        df = pd.read_csv(fn, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        raise common.ConfigError(f'Ragged rows in {fn}: {e}')
    except pd.errors.EmptyDataError:
        raise common.ConfigError(f'Missing header in {fn}.')
    df = df.replace('', np.nan)
    return df

def _prefixed(columns, prefix):
    """Return columns named prefix1, prefix2, ... in order."""
    names = [c for c in columns
             if c.startswith(prefix) and c[len(prefix):].isdigit()]
    expected = [f'{prefix}{i}' for i in range(1, len(names) + 1)]
    if names != expected:
        raise common.ConfigError(
            f"Columns '{prefix}*' must be {expected}, found {names}.")
    return names

class PopFrame:
    """
    Class for storing a finite population.

    The population is the only non-random object of the design-based
    framework: potential outcomes Y_t(z) and covariates X_t are constants
    and all randomness comes from treatment assignment. Arrays are stored
    read-only.

    Parameters
    ----------
    outcomes : array-like
        Potential outcomes of shape (T, K), K >= 2.
    covariates : array-like, optional
        Covariates of shape (T, J), J >= 0.
    block_sizes : list, optional
        Group sizes [n_1, ..., n_T'] partitioning the units in order.

    See Also
    --------
    PopFrame.from_file
        Construct PopFrame from a CSV file.
    generate_population
        Draw a PopFrame from a data-generating process.

    Examples
    --------

    >>> from dbadapt import pypop
    >>> pf = pypop.PopFrame([[0, 1], [2, 5]])
    >>> pf.true_estimand([-1, 1])
    array([2.])
    """
    def __init__(self, outcomes, covariates=None, block_sizes=None):
        outcomes = np.array(outcomes, dtype=float)
        if outcomes.ndim != 2:
            raise common.ConfigError('Potential outcomes must be a matrix.')
        T, K = outcomes.shape
        if T < 1:
            raise common.ConfigError(
                'population must contain at least one unit')
        if K < 2:
            raise common.ConfigError('Population must have at least two arms.')
        if not np.all(np.isfinite(outcomes)):
            raise common.ConfigError('Potential outcomes must be finite.')
        if covariates is None:
            covariates = np.empty((T, 0))
        covariates = np.array(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, np.newaxis]
        if covariates.shape[0] != T:
            raise common.ConfigError(
                f'Covariate matrix has {covariates.shape[0]} rows but '
                f'there are {T} units.')
        if block_sizes is not None:
            block_sizes = [int(n) for n in block_sizes]
            if min(block_sizes) < 1 or sum(block_sizes) != T:
                raise common.ConfigError(
                    'Block sizes must be positive and sum to the number '
                    'of units.')
        self._outcomes = _readonly(outcomes)
        self._covariates = _readonly(covariates)
        self._block_sizes = None if block_sizes is None else tuple(block_sizes)

    @property
    def outcomes(self):
        """numpy.ndarray : Potential outcomes of shape (T, K)."""
        return self._outcomes

    @property
    def covariates(self):
        """numpy.ndarray : Covariates of shape (T, J)."""
        return self._covariates

    @property
    def block_sizes(self):
        """tuple : Group sizes, or None for a population without blocks."""
        return self._block_sizes

    @property
    def num_units(self):
        return self._outcomes.shape[0]

    @property
    def num_arms(self):
        return self._outcomes.shape[1]

    @property
    def num_covariates(self):
        return self._covariates.shape[1]

    @property
    def group_sizes(self):
        """numpy.ndarray : Group sizes, one per unit without blocks."""
        if self._block_sizes is None:
            return np.ones(self.num_units, dtype=int)
        return np.array(self._block_sizes)

    @property
    def df(self):
        """pandas.DataFrame : Population in CSV layout."""
        data = {'unit': np.arange(1, self.num_units + 1)}
        if self._block_sizes is not None:
            data['block'] = np.repeat(np.arange(1, len(self._block_sizes) + 1),
                                      self._block_sizes)
        for z in range(self.num_arms):
            data[f'y{z+1}'] = self._outcomes[:, z]
        for j in range(self.num_covariates):
            data[f'x{j+1}'] = self._covariates[:, j]
        return pd.DataFrame(data)

    @property
    def shape(self):
        """tuple : Dimensions (T, K, J)."""
        return (self.num_units, self.num_arms, self.num_covariates)

    @classmethod
    def from_file(cls, fn):
        """
        Construct PopFrame from a CSV file.

        The header must be ``unit,[block,]y1..yK,x1..xJ``; K is inferred
        from the y-columns and J from the x-columns.

        Parameters
        ----------
        fn : str
            CSV file path.

        Returns
        -------
        PopFrame
            PopFrame object.
        """
        df = _read_csv(fn)
        columns = list(df.columns)
        if not columns or columns[0] != 'unit':
            raise common.ConfigError("First CSV column must be 'unit'.")
        if df.empty:
            raise common.ConfigError(
                'population must contain at least one unit')
        y = _prefixed(columns, 'y')
        x = _prefixed(columns, 'x')
        known = ['unit'] + (['block'] if 'block' in columns else []) + y + x
        if columns != known:
            raise common.ConfigError(
                f'Unexpected population header: {columns}')
        _check_units(df)
        block_sizes = None
        if 'block' in columns:
            block_sizes = _check_blocks(_numeric(df, ['block'])[:, 0])
        return cls(_numeric(df, y), _numeric(df, x) if x else None,
                   block_sizes)

    def to_file(self, fn):
        """Write the population to a CSV file with 17 significant digits."""
        self.df.to_csv(fn, index=False, float_format=CSV_FLOAT_FORMAT,
                       lineterminator='\n')

    def to_string(self):
        """Render the population as CSV text."""
        return self.df.to_csv(index=False, float_format=CSV_FLOAT_FORMAT,
                              lineterminator='\n')

    def group_means(self):
        """
        Return the group averages of the potential outcomes.

        Returns
        -------
        numpy.ndarray
            Array of shape (T', K) with entry (t, z) the mean of Y_ti(z)
            over units i in group t. Without blocks this is the outcome
            table itself.
        """
        if self._block_sizes is None:
            return np.array(self._outcomes)
        labels = np.repeat(np.arange(len(self._block_sizes)),
                           self._block_sizes)
        sums = np.zeros((len(self._block_sizes), self.num_arms))
        np.add.at(sums, labels, self._outcomes)
        return sums / self.group_sizes[:, np.newaxis]

    def true_estimand(self, C):
        """
        Return the finite-population estimand C Ybar.

        Parameters
        ----------
        C : array-like
            Contrast matrix of shape (Q, K) or a K-vector.

        Returns
        -------
        numpy.ndarray
            Q-vector C Ybar where Ybar(z) is the average of Y_t(z) over
            all units.
        """
        C = common.check_contrast(C, self.num_arms)
        return C @ self._outcomes.mean(axis=0)

    def estimand(self, C):
        """Return the :class:`Estimand` of a contrast."""
        C = common.check_contrast(C, self.num_arms)
        return Estimand(C, self.true_estimand(C))

def read_population_csv(fn):
    """Read a population CSV file (see :meth:`PopFrame.from_file`)."""
    return PopFrame.from_file(fn)

def write_population_csv(pf, fn):
    """Write a population CSV file (see :meth:`PopFrame.to_file`)."""
    pf.to_file(fn)

def true_estimand(pf, C):
    """Return C Ybar for a population (see :meth:`PopFrame.true_estimand`)."""
    return pf.true_estimand(C)

@dataclass(frozen=True)
class Estimand:
    """Contrast matrix C and its finite-population truth tau_C = C Ybar."""
    contrast: np.ndarray
    truth: np.ndarray

@dataclass(frozen=True)
class HistoryView:
    """
    Information available before unit (or group) t is assigned.

    Holds the covariates, assignments and outcomes of every earlier unit
    plus the covariates of the current unit (or of every unit in the
    current group). Arms are 0-based. All arrays are read-only views into
    the running experiment.

    Parameters
    ----------
    x_past : numpy.ndarray
        Covariates of earlier units, shape (s, J).
    z_past : numpy.ndarray
        Assignments of earlier units, shape (s,).
    y_past : numpy.ndarray
        Observed outcomes of earlier units, shape (s,).
    x_now : numpy.ndarray
        Covariates of the current unit (J,) or group (n_t, J).
    past_sizes : tuple, optional
        Sizes of earlier groups (block designs only).
    num_arms : int, optional
        Number of arms K of the experiment.
    """
    x_past: np.ndarray
    z_past: np.ndarray
    y_past: np.ndarray
    x_now: np.ndarray
    past_sizes: Optional[tuple] = None
    num_arms: Optional[int] = None

    @property
    def t(self):
        """int : 1-based index of the current unit or group."""
        if self.past_sizes is not None:
            return len(self.past_sizes) + 1
        return len(self.z_past) + 1

    @property
    def num_past(self):
        return len(self.z_past)

def _view(a, stop):
    v = a[:stop]
    if v.flags.writeable:
        v = v.view()
        v.setflags(write=False)
    return v

class LogFrame:
    """
    Class for storing the log of one adaptive experiment.

    One record per unit: covariates X_t, the realized assignment Z_t, the
    realized assignment probabilities e_t(.), the observed outcome Y_t
    and the outcome-model predictions m_t(.). In block experiments the
    probabilities are the per-unit marginals e_ti(.) and the joint
    assignment of group t is the group's slice of Z. Arms are stored
    0-based and written 1-based.

    Parameters
    ----------
    covariates : array-like
        Covariates of shape (T, J).
    assignments : array-like
        0-based arms of shape (T,).
    probs : array-like
        Assignment probabilities of shape (T, K).
    outcomes : array-like
        Observed outcomes of shape (T,).
    predictions : array-like, optional
        Outcome-model predictions of shape (T, K), zero by default.
    block_sizes : list, optional
        Group sizes for block experiments.
    population : PopFrame, optional
        Population the log was generated from.

    See Also
    --------
    LogFrame.from_file
        Construct LogFrame from a CSV file.
    pydesign.run_design
        Run a design on a population and return its LogFrame.
    """
    def __init__(
        self, covariates, assignments, probs, outcomes, predictions=None,
        block_sizes=None, population=None
    ):
        probs = np.array(probs, dtype=float)
        if probs.ndim != 2 or probs.shape[0] < 1 or probs.shape[1] < 2:
            raise common.ConfigError(
                'Assignment probabilities must be a (T, K) matrix with '
                'T >= 1 and K >= 2.')
        T, K = probs.shape
        z = np.asarray(assignments)
        if z.shape != (T,) or not np.issubdtype(z.dtype, np.integer):
            zf = np.asarray(z, dtype=float)
            if zf.shape != (T,) or np.any(zf != np.round(zf)):
                raise common.ConfigError('Assignments must be integers.')
            z = zf.astype(int)
        if np.any((z < 0) | (z >= K)):
            raise common.ConfigError(f'Assignments must be arms 1..{K}.')
        if np.any(probs <= 0) or np.any(probs >= 1):
            raise common.DegeneracyError(
                'Stored assignment probabilities must lie strictly between '
                '0 and 1.')
        if np.any(np.abs(probs.sum(axis=1) - 1) > 1e-9):
            raise common.ConfigError(
                'Assignment probabilities must sum to one for every unit.')
        covariates = np.array(covariates, dtype=float).reshape(T, -1)
        outcomes = np.array(outcomes, dtype=float).reshape(-1)
        if outcomes.shape != (T,):
            raise common.ConfigError('Need one observed outcome per unit.')
        if predictions is None:
            predictions = np.zeros((T, K))
        predictions = np.array(predictions, dtype=float)
        if predictions.shape != (T, K):
            raise common.ConfigError(
                f'Predictions must have shape {(T, K)}.')
        if not (np.all(np.isfinite(outcomes))
                and np.all(np.isfinite(predictions))
                and np.all(np.isfinite(covariates))):
            raise common.ConfigError('Log contains non-finite values.')
        if block_sizes is not None:
            block_sizes = tuple(int(n) for n in block_sizes)
            if min(block_sizes) < 1 or sum(block_sizes) != T:
                raise common.ConfigError(
                    'Block sizes must be positive and sum to the number '
                    'of units.')
        z = z.astype(int)
        z.setflags(write=False)
        self._x = _readonly(covariates)
        self._z = z
        self._e = _readonly(probs)
        self._y = _readonly(outcomes)
        self._m = _readonly(predictions)
        self._block_sizes = block_sizes
        self.population = population

    @property
    def x(self):
        return self._x

    @property
    def z(self):
        return self._z

    @property
    def e(self):
        return self._e

    @property
    def y(self):
        return self._y

    @property
    def m(self):
        return self._m

    @property
    def block_sizes(self):
        return self._block_sizes

    @property
    def is_block(self):
        return self._block_sizes is not None

    @property
    def num_units(self):
        return self._e.shape[0]

    @property
    def num_arms(self):
        return self._e.shape[1]

    @property
    def num_covariates(self):
        return self._x.shape[1]

    @property
    def group_sizes(self):
        """numpy.ndarray : Group sizes, one per unit without blocks."""
        if self._block_sizes is None:
            return np.ones(self.num_units, dtype=int)
        return np.array(self._block_sizes)

    @property
    def group_labels(self):
        """numpy.ndarray : 0-based group index of every unit."""
        sizes = self.group_sizes
        return np.repeat(np.arange(len(sizes)), sizes)

    @property
    def df(self):
        """pandas.DataFrame : Log in CSV layout (arms 1-based)."""
        data = {'unit': np.arange(1, self.num_units + 1)}
        if self.is_block:
            data['block'] = self.group_labels + 1
        for j in range(self.num_covariates):
            data[f'x{j+1}'] = self._x[:, j]
        data['z'] = self._z + 1
        for k in range(self.num_arms):
            data[f'e{k+1}'] = self._e[:, k]
        data['y'] = self._y
        for k in range(self.num_arms):
            data[f'm{k+1}'] = self._m[:, k]
        return pd.DataFrame(data)

    @classmethod
    def from_file(cls, fn):
        """
        Construct LogFrame from a CSV file.

        The header must be ``unit,[block,]x1..xJ,z,e1..eK,y,m1..mK`` with
        1-based arms in column z. The m-columns may be omitted, in which
        case predictions are zero.

        Parameters
        ----------
        fn : str
            CSV file path.

        Returns
        -------
        LogFrame
            LogFrame object.
        """
        df = _read_csv(fn)
        columns = list(df.columns)
        if not columns or columns[0] != 'unit':
            raise common.ConfigError("First CSV column must be 'unit'.")
        if df.empty:
            raise common.ConfigError('log must contain at least one unit')
        for name in ['z', 'y']:
            if name not in columns:
                raise common.ConfigError(f"Log is missing column '{name}'.")
        x = _prefixed(columns, 'x')
        e = _prefixed(columns, 'e')
        m = _prefixed(columns, 'm')
        if m and len(m) != len(e):
            raise common.ConfigError(
                'Number of m-columns must match number of e-columns.')
        known = (['unit'] + (['block'] if 'block' in columns else [])
                 + x + ['z'] + e + ['y'] + m)
        if columns != known:
            raise common.ConfigError(f'Unexpected log header: {columns}')
        _check_units(df)
        block_sizes = None
        if 'block' in columns:
            block_sizes = _check_blocks(_numeric(df, ['block'])[:, 0])
        return cls(
            _numeric(df, x) if x else np.empty((len(df), 0)),
            _numeric(df, ['z'])[:, 0] - 1,
            _numeric(df, e),
            _numeric(df, ['y'])[:, 0],
            _numeric(df, m) if m else None,
            block_sizes,
        )

    def to_file(self, fn):
        """Write the log to a CSV file with 17 significant digits."""
        self.df.to_csv(fn, index=False, float_format=CSV_FLOAT_FORMAT,
                       lineterminator='\n')

    def with_predictions(self, predictions):
        """Return a copy of the log carrying another prediction table."""
        return LogFrame(self._x, self._z, self._e, self._y, predictions,
                        self._block_sizes, self.population)

    def history(self, t):
        """
        Return the history before unit (or group) t.

        Parameters
        ----------
        t : int
            1-based unit index, or group index for block logs.

        Returns
        -------
        HistoryView
            Records of every earlier unit plus the current covariates.
        """
        if not self.is_block:
            if not 1 <= t <= self.num_units:
                raise ValueError(f'Unit index out of range: {t}')
            s = t - 1
            return HistoryView(_view(self._x, s), _view(self._z, s),
                               _view(self._y, s), self._x[s],
                               num_arms=self.num_arms)
        sizes = self._block_sizes
        if not 1 <= t <= len(sizes):
            raise ValueError(f'Group index out of range: {t}')
        s = sum(sizes[:t - 1])
        return HistoryView(_view(self._x, s), _view(self._z, s),
                           _view(self._y, s), self._x[s:s + sizes[t - 1]],
                           tuple(sizes[:t - 1]), self.num_arms)

    def assignment_hash(self):
        """Return a short hash of the assignment sequence."""
        return hashlib.sha1(self._z.astype(np.int64).tobytes()).hexdigest()[:16]

def read_log_csv(fn):
    """Read an experiment log CSV file (see :meth:`LogFrame.from_file`)."""
    return LogFrame.from_file(fn)

def write_log_csv(lf, fn):
    """Write an experiment log CSV file (see :meth:`LogFrame.to_file`)."""
    lf.to_file(fn)
