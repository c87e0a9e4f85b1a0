"""
The common submodule is used by other dbadapt submodules such as pyest and
pystudy. It holds the package exceptions, the contrast and covariance
helpers shared by the estimators and the enumeration oracle, the
chi-square quantile, and the argparse helpers used by the CLI.
"""

import pathlib
import inspect
import json
from argparse import RawTextHelpFormatter, SUPPRESS

import numpy as np
from scipy import special

DBADAPT_PATH = pathlib.Path(__file__).parent.parent.parent.absolute()

RANK_TOLERANCE = 1e-10
EIGEN_TOLERANCE = 1e-12

class ConfigError(ValueError):
    """Raised for malformed configuration, CSV or parameter values."""

class DegeneracyError(ValueError):
    """
    Raised when a computation is numerically degenerate.

    Examples are a singular projected covariance matrix (e.g. an arm that
    was never assigned) or a stored assignment probability that is not
    strictly positive.
    """

def _script_name():
    """Return the current script's filename."""
    fn = inspect.stack()[1].filename
    return pathlib.Path(fn).stem.replace('_', '-')

def _add_parser(subparsers, name, **kwargs):
    """Return the pre-formatted parser."""
    parser = subparsers.add_parser(
        name,
        add_help=False,
        formatter_class=RawTextHelpFormatter,
        **kwargs,
    )
    parser._positionals.title = 'Positional arguments'
    parser._optionals.title = 'Optional arguments'
    parser.add_argument(
        '-h',
        '--help',
        action='help',
        default=SUPPRESS,
        help='Show this help message and exit.',
    )
    return parser

def check_contrast(C, num_arms=None):
    """
    Validate and return a contrast matrix as a 2D float array.

    A vector is promoted to a single-row matrix. The matrix must have full
    row rank, which is checked numerically: its smallest singular value
    must exceed 1e-10 times the largest.

    Parameters
    ----------
    C : array-like
        Contrast matrix of shape (Q, K) or a K-vector.
    num_arms : int, optional
        Expected number of columns K.

    Returns
    -------
    numpy.ndarray
        Contrast matrix of shape (Q, K).

    Examples
    --------

    >>> from dbadapt import common
    >>> common.check_contrast([-1, 1], num_arms=2)
    array([[-1.,  1.]])
    """
    C = np.array(C, dtype=float)
    if C.ndim == 1:
        C = C[np.newaxis, :]
    if C.ndim != 2 or C.size == 0:
        raise ValueError('Contrast must be a nonempty vector or matrix.')
    if num_arms is not None and C.shape[1] != num_arms:
        raise ValueError(f'Contrast has {C.shape[1]} columns but there '
                         f'are {num_arms} arms.')
    if not np.all(np.isfinite(C)):
        raise ValueError('Contrast contains non-finite entries.')
    if C.shape[0] > C.shape[1]:
        raise ConfigError('Contrast matrix must have full row rank '
                          f'(it has more rows than columns: {C.shape}).')
    s = np.linalg.svd(C, compute_uv=False)
    if s[0] == 0 or s[-1] <= RANK_TOLERANCE * s[0]:
        raise ConfigError('Contrast matrix must have full row rank.')
    return C

def parse_contrast(value):
    """
    Parse a contrast given in a config file or on the command line.

    Accepts a list (one row), a list of lists, or a string such as
    ``'-1,1'`` or ``'-1,1,0;0,-1,1'`` where rows are separated by
    semicolons.
    """
    if isinstance(value, str):
        try:
            rows = [[float(x) for x in row.split(',')]
                    for row in value.split(';') if row.strip()]
        except ValueError:
            raise ConfigError(f'Could not parse contrast: {value!r}')
        value = rows
    try:
        C = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f'Could not parse contrast: {value!r}')
    if C.ndim == 1:
        C = C[np.newaxis, :]
    return C

def chi2_quantile(q, df):
    """
    Return the q-quantile of the chi-square distribution.

    The quantile is found by bisection on the chi-square CDF, which is the
    regularized lower incomplete gamma function P(df/2, x/2). The returned
    value is within 1e-10 (absolute) of the exact quantile.

    Parameters
    ----------
    q : float
        Probability level in (0, 1).
    df : int
        Degrees of freedom.

    Returns
    -------
    float
        Chi-square quantile.

    Examples
    --------

    >>> from dbadapt import common
    >>> round(common.chi2_quantile(0.95, 1), 9)
    3.841458821
    """
    if not 0 < q < 1:
        raise ValueError(f'Probability level must be in (0, 1): {q}')
    if df < 1:
        raise ValueError(f'Degrees of freedom must be positive: {df}')
    a = df / 2
    lower, upper = 0.0, float(df)
    while special.gammainc(a, upper / 2) < q:
        lower, upper = upper, upper * 2
    while upper - lower > 1e-11:
        middle = (lower + upper) / 2
        if special.gammainc(a, middle / 2) < q:
            lower = middle
        else:
            upper = middle
    return (lower + upper) / 2

def weighted_covariance(vectors, weights, center_weights):
    """
    Return sum_t w_t (v_t - c)(v_t - c)^T where c = sum_t p_t v_t.

    This is the single routine behind every covariance estimator in the
    package. The ordinary sample covariance uses w_t = 1/(T-1) and
    p_t = 1/T.

    Parameters
    ----------
    vectors : numpy.ndarray
        Array of shape (T, K).
    weights : numpy.ndarray
        Nonnegative weights w_t of shape (T,).
    center_weights : numpy.ndarray
        Centering weights p_t of shape (T,), summing to one.

    Returns
    -------
    numpy.ndarray
        Symmetric matrix of shape (K, K).
    """
    vectors = np.asarray(vectors, dtype=float)
    center = center_weights @ vectors
    d = vectors - center
    m = (d.T * weights) @ d
    return (m + m.T) / 2

def sample_covariance(vectors):
    """Return the (T-1)-normalized sample covariance of the rows."""
    vectors = np.asarray(vectors, dtype=float)
    T = vectors.shape[0]
    if T < 2:
        raise ValueError('Sample covariance requires at least two rows.')
    return weighted_covariance(vectors, np.full(T, 1 / (T - 1)),
                               np.full(T, 1 / T))

def read_json(path):
    """Load a JSON config, raising ConfigError with the path on failure."""
    path = pathlib.Path(path)
    if not path.exists():
        raise ConfigError(f'Config file does not exist: {path}')
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f'Could not parse JSON in {path}: {e}')

def write_json(data, path):
    """Write a JSON document with sorted keys and a trailing newline."""
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')
