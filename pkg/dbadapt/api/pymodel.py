"""
The pymodel submodule builds the outcome predictions m_t(z) used by the
augmented estimators. Adaptive models (``Zero``, ``RunningMean``,
``OnlineLeastSquares``, ``KNearestNeighbors`` and the ``Oracle`` used for
the zero-randomness check) only ever see the history H_t, so predictions
for unit t depend on earlier same-arm records and the covariates of unit
t alone. Each adaptive model keeps an incremental per-arm state, which
lets one pass over an experiment log produce predictions for every unit.

The module also implements the nonadaptive comparators: per-arm fits on
all units (``predict_all_units``) and cross-fitting over contiguous folds
(``crossfit_estimate``).
"""

import warnings
from dataclasses import dataclass
from typing import Optional

from . import common

import numpy as np
import statsmodels.api as sm

def _well_conditioned(xtx):
    s = np.linalg.svd(xtx, compute_uv=False)
    return s[0] > 0 and s[-1] > common.RANK_TOLERANCE * s[0]

class _ZeroState:
    def __init__(self, num_arms):
        self.num_arms = num_arms

    def predict(self, x, index=None):
        return np.zeros(self.num_arms)

    def update(self, x, z, y):
        pass

class _MeanState:
    def __init__(self, num_arms):
        self.sums = np.zeros(num_arms)
        self.counts = np.zeros(num_arms, dtype=int)

    def predict(self, x, index=None):
        m = np.zeros(len(self.sums))
        seen = self.counts > 0
        m[seen] = self.sums[seen] / self.counts[seen]
        return m

    def update(self, x, z, y):
        self.sums[z] += y
        self.counts[z] += 1

class _LeastSquaresState(_MeanState):
    def __init__(self, num_arms, num_covariates, min_obs):
        super().__init__(num_arms)
        p = num_covariates + 1
        self.min_obs = min_obs
        self.xtx = np.zeros((num_arms, p, p))
        self.xty = np.zeros((num_arms, p))

    def predict(self, x, index=None):
        m = super().predict(x)
        row = np.r_[1.0, x]
        for z in range(len(m)):
            if self.counts[z] < self.min_obs:
                continue
            if not _well_conditioned(self.xtx[z]):
                continue
            m[z] = row @ np.linalg.solve(self.xtx[z], self.xty[z])
        return m

    def update(self, x, z, y):
        super().update(x, z, y)
        row = np.r_[1.0, x]
        self.xtx[z] += np.outer(row, row)
        self.xty[z] += row * y

class _NeighborState:
    def __init__(self, num_arms, num_covariates, k):
        self.k = k
        self.x = [np.zeros((16, num_covariates)) for _ in range(num_arms)]
        self.y = [np.zeros(16) for _ in range(num_arms)]
        self.counts = np.zeros(num_arms, dtype=int)

    def predict(self, x, index=None):
        m = np.zeros(len(self.counts))
        for z, n in enumerate(self.counts):
            if not n:
                continue
            d = np.linalg.norm(self.x[z][:n] - x, axis=1)
            nearest = np.argsort(d, kind='stable')[:self.k]
            m[z] = self.y[z][nearest].mean()
        return m

    def update(self, x, z, y):
        n = self.counts[z]
        if n == len(self.y[z]):
            self.x[z] = np.vstack([self.x[z], np.zeros_like(self.x[z])])
            self.y[z] = np.r_[self.y[z], np.zeros_like(self.y[z])]
        self.x[z][n] = x
        self.y[z][n] = y
        self.counts[z] += 1

class _OracleState:
    def __init__(self, outcomes):
        self.outcomes = outcomes

    def predict(self, x, index=None):
        return np.array(self.outcomes[index], dtype=float)

    def update(self, x, z, y):
        pass

@dataclass(frozen=True)
class Zero:
    """Predict zero for every arm; AIPW then coincides with IPW."""
    def start(self, num_arms, num_covariates):
        return _ZeroState(num_arms)

@dataclass(frozen=True)
class RunningMean:
    """Predict the sample mean of earlier same-arm outcomes (0 if none)."""
    def start(self, num_arms, num_covariates):
        return _MeanState(num_arms)

@dataclass(frozen=True)
class OnlineLeastSquares:
    """
    Per-arm least squares of Y on (1, X) over earlier same-arm units.

    The normal equations are accumulated one record at a time. An arm
    with fewer than ``min_obs`` observations, or whose X'X has smallest
    singular value at most 1e-10 times the largest, falls back to its
    running mean.

    Parameters
    ----------
    min_obs : int, optional
        Minimum number of same-arm observations, J + 2 by default.
    """
    min_obs: Optional[int] = None

    def start(self, num_arms, num_covariates):
        min_obs = num_covariates + 2 if self.min_obs is None else self.min_obs
        if min_obs < num_covariates + 2:
            raise common.ConfigError(
                f'min_obs must be at least J + 2 = {num_covariates + 2}: '
                f'{min_obs}')
        return _LeastSquaresState(num_arms, num_covariates, min_obs)

@dataclass(frozen=True)
class KNearestNeighbors:
    """
    Mean outcome of the k nearest earlier same-arm units.

    Distance is Euclidean in the covariates; ties are broken by arrival
    order. With fewer than k candidates all of them are used.
    """
    k: int = 10

    def __post_init__(self):
        if int(self.k) < 1:
            raise common.ConfigError(f'k must be at least 1: {self.k}')

    def start(self, num_arms, num_covariates):
        return _NeighborState(num_arms, num_covariates, self.k)

@dataclass(frozen=True, eq=False)
class Oracle:
    """
    Predict the true potential outcomes.

    Only meaningful in simulations: the table is bound to the population
    the experiment was run on (see :meth:`Oracle.bind`).
    """
    outcomes: Optional[np.ndarray] = None

    def bind(self, pf):
        return Oracle(pf.outcomes)

    def start(self, num_arms, num_covariates):
        if self.outcomes is None:
            raise common.ConfigError(
                'Oracle model has no potential outcomes bound.')
        return _OracleState(self.outcomes)

MODELS = {
    'zero': Zero,
    'running_mean': RunningMean,
    'least_squares': OnlineLeastSquares,
    'knn': KNearestNeighbors,
    'oracle': Oracle,
}

def model_from_dict(data):
    """
    Construct an outcome model from a config dict or name.

    Examples
    --------

    >>> from dbadapt import pymodel
    >>> pymodel.model_from_dict({'kind': 'knn', 'k': 5})
    KNearestNeighbors(k=5)
    >>> pymodel.model_from_dict('least_squares')
    OnlineLeastSquares(min_obs=None)
    """
    if isinstance(data, str):
        data = {'kind': data}
    data = dict(data)
    kind = data.pop('kind', None)
    if kind not in MODELS:
        raise common.ConfigError(
            f"Unknown outcome model '{kind}', expected one of "
            f"{sorted(MODELS)}.")
    try:
        return MODELS[kind](**data)
    except TypeError as e:
        raise common.ConfigError(f"Bad parameters for model '{kind}': {e}")

def model_name(model):
    """Return the config name of a model."""
    return {v: k for k, v in MODELS.items()}[type(model)]

def predict_adaptive(model, history, x, num_arms=None):
    """
    Predict Y_t(.) for the current unit from its history alone.

    The history is replayed into a fresh model state, so the result only
    depends on (model, history, x).

    Parameters
    ----------
    model : Zero, RunningMean, OnlineLeastSquares, KNearestNeighbors or Oracle
        Adaptive outcome model.
    history : pypop.HistoryView
        History before the current unit.
    x : array-like
        Covariates of the unit to predict.
    num_arms : int, optional
        Number of arms K; taken from ``history.num_arms`` when omitted.

    Returns
    -------
    numpy.ndarray
        K-vector of predictions.

    Examples
    --------

    >>> import numpy as np
    >>> from dbadapt import pymodel, pypop
    >>> h = pypop.HistoryView(np.empty((2, 0)), np.array([0, 0]),
    ...                       np.array([2.0, 4.0]), np.empty(0), num_arms=2)
    >>> pymodel.predict_adaptive(pymodel.RunningMean(), h, np.empty(0))
    array([3., 0.])
    """
    x_past = np.asarray(history.x_past)
    if num_arms is None:
        num_arms = _num_arms(model, history)
    state = model.start(num_arms, x_past.shape[1])
    for s in range(len(history.z_past)):
        state.update(x_past[s], int(history.z_past[s]), history.y_past[s])
    return state.predict(np.asarray(x, dtype=float), history.num_past)

def _num_arms(model, history):
    if history.num_arms is not None:
        return int(history.num_arms)
    if isinstance(model, Oracle) and model.outcomes is not None:
        return model.outcomes.shape[1]
    raise common.ConfigError(
        'Number of arms is unknown; pass num_arms or a history that '
        'carries it.')

def adaptive_predictions(model, lf):
    """
    Return the adaptive prediction table m_t(.) for every unit of a log.

    In block logs every unit of group t is predicted from groups 1..t-1,
    and the state is updated with the whole group afterwards.

    Parameters
    ----------
    model : Zero, RunningMean, OnlineLeastSquares, KNearestNeighbors or Oracle
        Adaptive outcome model.
    lf : pypop.LogFrame
        Experiment log.

    Returns
    -------
    numpy.ndarray
        Predictions of shape (T, K).
    """
    if isinstance(model, Oracle) and model.outcomes is None:
        if lf.population is None:
            raise common.ConfigError(
                'Oracle model needs the population of the log.')
        model = model.bind(lf.population)
    T, K = lf.num_units, lf.num_arms
    state = model.start(K, lf.num_covariates)
    m = np.zeros((T, K))
    s = 0
    for n in lf.group_sizes:
        for i in range(s, s + n):
            m[i] = state.predict(lf.x[i], i)
        for i in range(s, s + n):
            state.update(lf.x[i], int(lf.z[i]), lf.y[i])
        s += n
    return m

def _fit_predict(inner, x_train, y_train, x_new):
    """Fit one arm on the training units and predict new units."""
    n = len(y_train)
    if isinstance(inner, Zero):
        return np.zeros(len(x_new))
    if isinstance(inner, RunningMean):
        return np.full(len(x_new), y_train.mean())
    if isinstance(inner, KNearestNeighbors):
        m = np.zeros(len(x_new))
        for i, x in enumerate(x_new):
            d = np.linalg.norm(x_train - x, axis=1)
            m[i] = y_train[np.argsort(d, kind='stable')[:inner.k]].mean()
        return m
    if isinstance(inner, OnlineLeastSquares):
        J = x_train.shape[1]
        min_obs = J + 2 if inner.min_obs is None else inner.min_obs
        X = np.column_stack([np.ones(n), x_train])
        if n < min_obs or not _well_conditioned(X.T @ X):
            return np.full(len(x_new), y_train.mean())
        fit = sm.OLS(y_train, X).fit()
        return np.column_stack([np.ones(len(x_new)), x_new]) @ fit.params
    raise common.ConfigError(
        f'{type(inner).__name__} cannot be used as an all-units model.')

def _fit_arms(inner, lf, train, predict):
    """Return (T_predict, K) predictions from per-arm fits on train units."""
    K = lf.num_arms
    m = np.zeros((len(predict), K))
    for z in range(K):
        rows = train[lf.z[train] == z]
        if not rows.size:
            warnings.warn(f'Arm {z+1} has no units to fit; its '
                          f'predictions are set to 0.')
            continue
        m[:, z] = _fit_predict(inner, lf.x[rows], lf.y[rows], lf.x[predict])
    return m

def predict_all_units(lf, inner=None):
    """
    Fit every arm on all of its units and predict every unit.

    Parameters
    ----------
    lf : pypop.LogFrame
        Complete experiment log.
    inner : object, optional
        Outcome model; least squares (fitted with statsmodels OLS) by
        default. KNN neighborhoods include the unit itself.

    Returns
    -------
    numpy.ndarray
        Predictions of shape (T, K). An arm with no units is predicted
        as 0 with a warning.
    """
    if inner is None:
        inner = OnlineLeastSquares()
    units = np.arange(lf.num_units)
    return _fit_arms(inner, lf, units, units)

@dataclass
class CrossFitResult:
    """
    Result of :func:`crossfit_estimate`.

    Attributes
    ----------
    estimate : numpy.ndarray
        Q-vector C Y_cf.
    means : numpy.ndarray
        K-vector Y_cf of cross-fitted arm means.
    fold_estimates : numpy.ndarray
        (G, Q) matrix of fold-level estimates C Y_[g].
    weights : numpy.ndarray
        Fold weights |T_g| / T.
    fold_sizes : numpy.ndarray
        Fold sizes |T_g|.
    fold_covariances : numpy.ndarray
        (G, K, K) fold-level covariance estimates from the fold's
        residual pseudo-outcomes 1(Z_t = z) (Y_t - m_t(z)) / e(z) with
        e(z) = |T_gz| / |T_g|.
    """
    estimate: np.ndarray
    means: np.ndarray
    fold_estimates: np.ndarray
    weights: np.ndarray
    fold_sizes: np.ndarray
    fold_covariances: np.ndarray

def crossfit_estimate(lf, G, inner=None, C=None):
    """
    Cross-fitted augmented estimate over G contiguous folds.

    For fold g the outcome model is fitted on the units outside the fold
    and used to predict the fold's units. The fold estimate of Ybar(z) is
    the mean residual Y - m over the fold's arm-z units plus the mean
    prediction m(z) over the whole fold. Fold estimates are averaged with
    weights |T_g| / T. The first T mod G folds get one extra unit.

    Parameters
    ----------
    lf : pypop.LogFrame
        Complete experiment log.
    G : int
        Number of folds, at least 2.
    inner : object, optional
        Outcome model, least squares by default.
    C : array-like, optional
        Contrast; the identity by default.

    Returns
    -------
    CrossFitResult
        Point estimate and fold-level pieces.
    """
    G = int(G)
    if G < 2:
        raise ValueError(f'Cross-fitting needs at least two folds: {G}')
    T, K = lf.num_units, lf.num_arms
    if G > T:
        raise ValueError(f'Cannot split {T} units into {G} folds.')
    if inner is None:
        inner = OnlineLeastSquares()
    C = np.eye(K) if C is None else common.check_contrast(C, K)
    units = np.arange(T)
    folds = np.array_split(units, G)
    fold_means = np.zeros((G, K))
    fold_covariances = np.zeros((G, K, K))
    sizes = np.array([len(f) for f in folds])
    for g, fold in enumerate(folds):
        z = lf.z[fold]
        counts = np.bincount(z, minlength=K)
        if np.any(counts == 0):
            raise ValueError('empty fold-arm cell; increase fold size')
        train = np.setdiff1d(units, fold)
        m = _fit_arms(inner, lf, train, fold)
        resid = lf.y[fold] - m[np.arange(len(fold)), z]
        ind = z[:, np.newaxis] == np.arange(K)
        e_hat = counts / len(fold)
        pseudo = np.where(ind, resid[:, np.newaxis] / e_hat, 0.0)
        fold_means[g] = (np.bincount(z, weights=resid, minlength=K) / counts
                         + m.mean(axis=0))
        if len(fold) >= 2:
            fold_covariances[g] = common.sample_covariance(pseudo)
    weights = sizes / T
    means = weights @ fold_means
    return CrossFitResult(C @ means, means, fold_means @ C.T, weights,
                          sizes, fold_covariances)
