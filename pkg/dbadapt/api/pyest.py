"""
The pyest submodule is the estimation core of dbadapt. It turns an
experiment log into per-unit pseudo-outcomes (inverse-propensity-weighted
and augmented), point estimates of C Ybar, covariance estimates, Wald
confidence sets and path diagnostics.

Block logs use the same code path as unit logs: per-group pseudo-outcomes
are scaled by rho_t = T n_t / N, and with one unit per group rho_t = 1.
The b-weighted covariance estimators instead center the unscaled group
pseudo-outcomes at their size-weighted mean.
"""

import warnings
from dataclasses import dataclass, field

from . import common, pymodel

import numpy as np

COVARIANCE_KINDS = ['vhat_ipw', 'vhat_aipw', 'vtilde_aipw', 'vhat_aipw_b',
                    'vtilde_aipw_b']

@dataclass
class PseudoOutcomeTrace:
    """
    Pseudo-outcomes of one experiment log.

    Attributes
    ----------
    unit_ipw, unit_aipw : numpy.ndarray
        Per-unit (N, K) pseudo-outcomes 1(Z=z) Y / e(z) and
        1(Z=z) Y / e(z) + (1 - 1(Z=z) / e(z)) m(z).
    m_hat : numpy.ndarray
        Per-unit (N, K) outcome-model predictions.
    ipw, aipw, tilde : numpy.ndarray
        Per-group (T, K) averages of the unit pseudo-outcomes; ``tilde``
        is ``aipw`` minus the group-averaged predictions. Without blocks
        every unit is its own group.
    sizes : numpy.ndarray
        Group sizes n_t.
    rho : numpy.ndarray
        Scale factors T n_t / N.
    pi : numpy.ndarray
        Group proportions n_t / N.
    """
    unit_ipw: np.ndarray
    unit_aipw: np.ndarray
    m_hat: np.ndarray
    ipw: np.ndarray
    aipw: np.ndarray
    tilde: np.ndarray
    sizes: np.ndarray
    rho: np.ndarray
    pi: np.ndarray

    @property
    def num_groups(self):
        return len(self.sizes)

    @property
    def num_arms(self):
        return self.ipw.shape[1]

    def group_vectors(self, estimator):
        """Return the unscaled per-group pseudo-outcomes of an estimator."""
        if estimator not in ('ipw', 'aipw', 'tilde'):
            raise ValueError(f"Unknown estimator '{estimator}'.")
        return getattr(self, estimator)

def _group_means(a, sizes):
    if np.all(sizes == 1):
        return a
    starts = np.r_[0, np.cumsum(sizes)[:-1]]
    return np.add.reduceat(a, starts, axis=0) / sizes[:, np.newaxis]

def pseudo_outcomes(lf):
    """
    Compute the pseudo-outcome trace of an experiment log.

    The probabilities used are the ones stored in the log, so logs from
    external systems can be analyzed.

    Parameters
    ----------
    lf : pypop.LogFrame
        Experiment log.

    Returns
    -------
    PseudoOutcomeTrace
        Pseudo-outcomes per unit and per group.

    Examples
    --------

    >>> from dbadapt import pypop, pyest
    >>> lf = pypop.LogFrame([[0.0]], [0], [[0.5, 0.5]], [2.0], [[1.0, 3.0]])
    >>> trace = pyest.pseudo_outcomes(lf)
    >>> trace.unit_ipw
    array([[4., 0.]])
    >>> trace.unit_aipw
    array([[3., 3.]])
    """
    e = lf.e
    if np.any(e <= 0):
        raise common.DegeneracyError(
            'Stored assignment probabilities must be positive.')
    K = lf.num_arms
    ind = lf.z[:, np.newaxis] == np.arange(K)
    ipw = np.where(ind, lf.y[:, np.newaxis] / e, 0.0)
    aipw = ipw + (1 - ind / e) * lf.m
    sizes = lf.group_sizes
    N = int(sizes.sum())
    T = len(sizes)
    g_ipw = _group_means(ipw, sizes)
    g_aipw = _group_means(aipw, sizes)
    g_m = _group_means(np.array(lf.m), sizes)
    return PseudoOutcomeTrace(
        unit_ipw=ipw,
        unit_aipw=aipw,
        m_hat=np.array(lf.m),
        ipw=g_ipw,
        aipw=g_aipw,
        tilde=g_aipw - g_m,
        sizes=sizes,
        rho=(T * sizes) / N,
        pi=sizes / N,
    )

def point_estimate(trace, C, estimator='aipw'):
    """
    Return the point estimate C (T^-1 sum_t rho_t Y_t).

    Parameters
    ----------
    trace : PseudoOutcomeTrace
        Pseudo-outcome trace.
    C : array-like
        Contrast matrix (Q, K).
    estimator : {'aipw', 'ipw'}, default: 'aipw'
        Which pseudo-outcomes to average.

    Returns
    -------
    numpy.ndarray
        Q-vector estimate.
    """
    C = common.check_contrast(C, trace.num_arms)
    if estimator not in ('ipw', 'aipw'):
        raise ValueError(f"Unknown estimator '{estimator}'.")
    v = trace.rho[:, np.newaxis] * trace.group_vectors(estimator)
    return C @ (v.sum(axis=0) / trace.num_groups)

def bt_weights(sizes):
    """
    Return the weights b_t of the b-weighted covariance estimators.

    With pi_t = n_t / N, b_t = T (pi_t^2 / (1 - 2 pi_t)) /
    (1 + sum_s pi_s^2 / (1 - 2 pi_s)). Equal group sizes give exactly
    1 / (T - 1).

    Parameters
    ----------
    sizes : array-like
        Group sizes n_t.

    Returns
    -------
    numpy.ndarray
        Positive weights b_t.

    Examples
    --------

    >>> from dbadapt import pyest
    >>> pyest.bt_weights([2, 2, 2, 2])
    array([0.33333333, 0.33333333, 0.33333333, 0.33333333])
    """
    sizes = np.asarray(sizes)
    if sizes.ndim != 1 or len(sizes) < 2 or np.any(sizes < 1):
        raise ValueError('Need at least two positive group sizes.')
    T = len(sizes)
    pi = sizes / sizes.sum()
    if np.any(pi >= 0.5):
        raise ValueError('group proportion must be below one half')
    if np.all(sizes == sizes[0]):
        return np.full(T, 1 / (T - 1))
    r = pi ** 2 / (1 - 2 * pi)
    return T * r / (1 + r.sum())

@dataclass
class CovarianceEstimate:
    """A K x K covariance estimate and the name of its estimator."""
    kind: str
    matrix: np.ndarray

    def project(self, C):
        """Return C V C^T."""
        C = common.check_contrast(C, self.matrix.shape[0])
        P = C @ self.matrix @ C.T
        return (P + P.T) / 2

def covariance_estimate(trace, kind):
    """
    Compute a covariance estimate from a pseudo-outcome trace.

    Parameters
    ----------
    trace : PseudoOutcomeTrace
        Pseudo-outcome trace with at least two groups.
    kind : str
        One of 'vhat_ipw', 'vhat_aipw' and 'vtilde_aipw' (sample
        covariance of rho-scaled IPW, AIPW or residualized AIPW
        pseudo-outcomes), or 'vhat_aipw_b' and 'vtilde_aipw_b' (b-weighted
        dispersion of the unscaled group pseudo-outcomes around their
        size-weighted mean).

    Returns
    -------
    CovarianceEstimate
        Symmetric positive semidefinite estimate.
    """
    if kind not in COVARIANCE_KINDS:
        raise ValueError(f"Unknown covariance kind '{kind}', expected one "
                         f"of {COVARIANCE_KINDS}.")
    T = trace.num_groups
    if T < 2:
        raise ValueError('Covariance estimation needs at least two groups.')
    estimator = {'vhat_ipw': 'ipw', 'vhat_aipw': 'aipw',
                 'vtilde_aipw': 'tilde', 'vhat_aipw_b': 'aipw',
                 'vtilde_aipw_b': 'tilde'}[kind]
    vectors = trace.group_vectors(estimator)
    if kind.endswith('_b'):
        matrix = common.weighted_covariance(
            vectors, bt_weights(trace.sizes), trace.pi)
    else:
        matrix = common.weighted_covariance(
            trace.rho[:, np.newaxis] * vectors, np.full(T, 1 / (T - 1)),
            np.full(T, 1 / T))
    return CovarianceEstimate(kind, matrix)

class ConfidenceSet:
    """
    Wald confidence ellipsoid {tau : (c - tau)^T S^-1 (c - tau) <= q}.

    Parameters
    ----------
    center : numpy.ndarray
        Q-vector point estimate c.
    covariance : numpy.ndarray
        Q x Q estimated covariance S of the point estimate,
        i.e. T^-1 C V C^T.
    threshold : float
        Chi-square quantile q.
    """
    def __init__(self, center, covariance, threshold):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
        self.threshold = float(threshold)
        self.shape = np.linalg.inv(self.covariance)

    @property
    def dim(self):
        return self.center.size

    def statistic(self, tau):
        """Return the Wald statistic of a candidate value."""
        d = self.center - np.atleast_1d(np.asarray(tau, dtype=float))
        return float(d @ np.linalg.solve(self.covariance, d))

    def contains(self, tau):
        return self.statistic(tau) <= self.threshold

    @property
    def half_widths(self):
        """numpy.ndarray : Per-coordinate extents of the ellipsoid."""
        return np.sqrt(self.threshold * np.diag(self.covariance))

    @property
    def lower(self):
        return self.center - self.half_widths

    @property
    def upper(self):
        return self.center + self.half_widths

    def interval(self):
        """Return (lower, upper) of a one-dimensional set."""
        if self.dim != 1:
            raise ValueError('Only one-dimensional sets are intervals.')
        return float(self.lower[0]), float(self.upper[0])

    @property
    def length(self):
        """float : Interval length, or the major-axis diameter if Q > 1."""
        if self.dim == 1:
            return float(2 * self.half_widths[0])
        top = np.linalg.eigvalsh(self.covariance)[-1]
        return float(2 * np.sqrt(self.threshold * top))

def wald_set(tau_hat, projected, alpha):
    """
    Return the Wald set of an estimate with a given covariance.

    Parameters
    ----------
    tau_hat : array-like
        Q-vector estimate.
    projected : array-like
        Q x Q covariance of the estimate.
    alpha : float
        Significance level in (0, 1).

    Returns
    -------
    ConfidenceSet
        Confidence ellipsoid with chi-square threshold on Q degrees of
        freedom.
    """
    if not 0 < alpha < 1:
        raise ValueError(f'Alpha must lie in (0, 1): {alpha}')
    projected = np.atleast_2d(np.asarray(projected, dtype=float))
    projected = (projected + projected.T) / 2
    eig = np.linalg.eigvalsh(projected)
    if not np.all(np.isfinite(eig)) or eig[-1] <= 0 \
            or eig[0] <= common.EIGEN_TOLERANCE * eig[-1]:
        raise common.DegeneracyError(
            f'singular projected covariance (smallest eigenvalue '
            f'{eig[0]:.6g})')
    threshold = common.chi2_quantile(1 - alpha, projected.shape[0])
    return ConfidenceSet(tau_hat, projected, threshold)

def confidence_set(tau_hat, cov, C, alpha, T):
    """
    Return the Wald confidence set of tau_C.

    The set is {tau : (tau_hat - tau)^T (T^-1 C V C^T)^-1 (tau_hat - tau)
    <= q} where q is the (1 - alpha) chi-square quantile with rank(C)
    degrees of freedom.

    Parameters
    ----------
    tau_hat : array-like
        Q-vector point estimate.
    cov : CovarianceEstimate or array-like
        K x K covariance estimate V.
    C : array-like
        Contrast matrix (Q, K).
    alpha : float
        Significance level in (0, 1).
    T : int
        Number of units (groups for block logs).

    Returns
    -------
    ConfidenceSet
        Confidence ellipsoid. A singular projected covariance raises
        DegeneracyError.
    """
    V = cov.matrix if isinstance(cov, CovarianceEstimate) else np.asarray(cov)
    C = common.check_contrast(C, V.shape[0])
    return wald_set(tau_hat, C @ V @ C.T / T, alpha)

@dataclass
class DiagnosticsSummary:
    """
    Path diagnostics of one experiment log.

    Attributes
    ----------
    realized_min_prob : float
        Smallest realized assignment probability.
    max_abs_outcome : float
        Largest L_t, the largest |Y_t(z)| (or |Y_t| without the
        population).
    max_abs_model : float
        Largest M_t, the largest |m_t(z)|.
    lindeberg_proxy : float
        T^-1 max_t ((L_t + M_t) / e_t)^2 with e_t the realized minimum
        probability of unit (group) t.
    cs_proxy : float
        T^-2 sum_t (L_t + M_t)^4 / e_t^3.
    flags : list
        Names of proxies exceeding their thresholds.
    """
    realized_min_prob: float
    max_abs_outcome: float
    max_abs_model: float
    lindeberg_proxy: float
    cs_proxy: float
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {
            'realized_min_prob': self.realized_min_prob,
            'max_abs_outcome': self.max_abs_outcome,
            'max_abs_model': self.max_abs_model,
            'lindeberg_proxy': self.lindeberg_proxy,
            'cs_proxy': self.cs_proxy,
            'flags': list(self.flags),
        }

def diagnostics(
    lf, pf=None, lindeberg_threshold=None, cs_threshold=None
):
    """
    Summarize the regularity of an experiment path.

    Block logs aggregate per group (largest outcome, smallest
    probability) and scale L_t + M_t by rho_t.

    Parameters
    ----------
    lf : pypop.LogFrame
        Experiment log.
    pf : pypop.PopFrame, optional
        Population; the log's own population when omitted. Without it
        L_t is the observed |Y_t|.
    lindeberg_threshold, cs_threshold : float, optional
        Values above which the proxies are flagged with a warning.

    Returns
    -------
    DiagnosticsSummary
        Path diagnostics.
    """
    if pf is None:
        pf = lf.population
    if pf is not None and pf.num_units == lf.num_units:
        L = np.abs(pf.outcomes).max(axis=1)
    else:
        L = np.abs(lf.y)
    M = np.abs(lf.m).max(axis=1)
    e = lf.e.min(axis=1)
    sizes = lf.group_sizes
    T = len(sizes)
    if lf.is_block:
        starts = np.r_[0, np.cumsum(sizes)[:-1]]
        L = np.maximum.reduceat(L, starts)
        M = np.maximum.reduceat(M, starts)
        e = np.minimum.reduceat(e, starts)
        rho = (T * sizes) / sizes.sum()
    else:
        rho = np.ones(T)
    a = rho * (L + M)
    summary = DiagnosticsSummary(
        realized_min_prob=float(lf.e.min()),
        max_abs_outcome=float(L.max()),
        max_abs_model=float(M.max()),
        lindeberg_proxy=float(((a / e) ** 2).max() / T),
        cs_proxy=float(np.sum(a ** 4 / e ** 3) / T ** 2),
    )
    thresholds = [('lindeberg_proxy', lindeberg_threshold),
                  ('cs_proxy', cs_threshold)]
    for name, threshold in thresholds:
        value = getattr(summary, name)
        if threshold is not None and value > threshold:
            summary.flags.append(name)
            warnings.warn(f'Diagnostic {name} = {value:.4g} exceeds '
                          f'{threshold:.4g}; normal approximation may be '
                          f'poor.')
    return summary

def _check_assigned(lf, C):
    counts = np.bincount(lf.z, minlength=lf.num_arms)
    loaded = np.any(C != 0, axis=0)
    missing = np.flatnonzero(loaded & (counts == 0))
    if missing.size:
        raise common.DegeneracyError(
            f'singular projected covariance: arm {missing[0] + 1} was '
            f'never assigned')

def sample_mean_estimate(lf, C):
    """
    Return the arm sample-mean estimate and its Welch covariance.

    Parameters
    ----------
    lf : pypop.LogFrame
        Experiment log.
    C : array-like
        Contrast matrix (Q, K).

    Returns
    -------
    tuple
        Q-vector estimate and Q x Q covariance C diag(s_z^2 / n_z) C^T.
    """
    C = common.check_contrast(C, lf.num_arms)
    _check_assigned(lf, C)
    K = lf.num_arms
    means = np.zeros(K)
    var = np.zeros(K)
    for z in range(K):
        y = lf.y[lf.z == z]
        if y.size:
            means[z] = y.mean()
        if y.size >= 2:
            var[z] = y.var(ddof=1) / y.size
    return C @ means, C @ np.diag(var) @ C.T

def all_units_estimate(lf, inner, C):
    """
    Return the all-units adjusted estimate and its covariance.

    Arm means are estimated by the mean residual Y - m(z) over arm-z
    units plus the mean prediction m(z) over all units, where m is fitted
    on all units (see :func:`pymodel.predict_all_units`). The covariance
    is the sample covariance of the residual pseudo-outcomes
    1(Z_t = z) (Y_t - m_t(z)) / e(z) with e(z) = N_z / T, so the spread
    of the predictions themselves does not enter.

    Returns
    -------
    tuple
        Q-vector estimate and Q x Q covariance of the estimate.
    """
    C = common.check_contrast(C, lf.num_arms)
    _check_assigned(lf, C)
    T, K = lf.num_units, lf.num_arms
    m = pymodel.predict_all_units(lf, inner)
    counts = np.bincount(lf.z, minlength=K)
    resid = lf.y - m[np.arange(T), lf.z]
    ind = lf.z[:, np.newaxis] == np.arange(K)
    e_hat = np.maximum(counts, 1) / T
    pseudo = np.where(ind, resid[:, np.newaxis] / e_hat, 0.0)
    means = m.mean(axis=0) + pseudo.mean(axis=0)
    V = common.sample_covariance(pseudo)
    return C @ means, C @ V @ C.T / T

@dataclass
class InferenceReport:
    """
    Result of :func:`infer`.

    Attributes
    ----------
    tau_hat : numpy.ndarray
        Q-vector point estimate.
    contrast : numpy.ndarray
        Contrast matrix.
    estimator : str
        'ipw' or 'aipw'.
    covariances : dict
        Covariance estimates by kind.
    sets : dict
        Confidence sets by kind.
    diagnostics : DiagnosticsSummary
        Path diagnostics.
    trace : PseudoOutcomeTrace
        Pseudo-outcome trace.
    """
    tau_hat: np.ndarray
    contrast: np.ndarray
    estimator: str
    covariances: dict
    sets: dict
    diagnostics: DiagnosticsSummary
    trace: PseudoOutcomeTrace

    def to_dict(self):
        """Return the JSON-serializable report."""
        kinds = list(self.sets)
        return {
            'tau_hat': self.tau_hat.tolist(),
            'cov': {k: self.covariances[k].project(self.contrast).tolist()
                    for k in kinds},
            'ci_lower': {k: self.sets[k].lower.tolist() for k in kinds},
            'ci_upper': {k: self.sets[k].upper.tolist() for k in kinds},
            'chi2_threshold': self.sets[kinds[0]].threshold,
            'diagnostics': self.diagnostics.to_dict(),
        }

    def to_file(self, fn):
        """Write the report as JSON."""
        common.write_json(self.to_dict(), fn)

def default_kinds(lf, estimator='aipw'):
    """Return the covariance kinds reported for a log by default."""
    if estimator == 'ipw':
        return ['vhat_ipw']
    kinds = ['vhat_aipw', 'vtilde_aipw']
    sizes = lf.group_sizes
    if lf.is_block and len(sizes) >= 2 and np.all(sizes / sizes.sum() < 0.5):
        kinds += ['vhat_aipw_b', 'vtilde_aipw_b']
    return kinds

def infer(
    lf, C, alpha=0.05, estimator='aipw', kinds=None, pf=None,
    lindeberg_threshold=None, cs_threshold=None
):
    """
    Run the full inference pipeline on an experiment log.

    Parameters
    ----------
    lf : pypop.LogFrame
        Experiment log carrying its outcome-model predictions.
    C : array-like
        Contrast matrix (Q, K).
    alpha : float, default: 0.05
        Significance level.
    estimator : {'aipw', 'ipw'}, default: 'aipw'
        Point estimator.
    kinds : list, optional
        Covariance kinds; see :func:`default_kinds`.
    pf : pypop.PopFrame, optional
        Population for the diagnostics.
    lindeberg_threshold, cs_threshold : float, optional
        Diagnostic thresholds.

    Returns
    -------
    InferenceReport
        Point estimate, covariance estimates and confidence sets.
    """
    C = common.check_contrast(C, lf.num_arms)
    _check_assigned(lf, C)
    if kinds is None:
        kinds = default_kinds(lf, estimator)
    if not kinds:
        raise ValueError('Need at least one covariance kind.')
    trace = pseudo_outcomes(lf)
    tau_hat = point_estimate(trace, C, estimator)
    covariances = {}
    sets = {}
    for kind in kinds:
        cov = covariance_estimate(trace, kind)
        covariances[kind] = cov
        sets[kind] = confidence_set(tau_hat, cov, C, alpha, trace.num_groups)
    return InferenceReport(
        tau_hat=tau_hat,
        contrast=C,
        estimator=estimator,
        covariances=covariances,
        sets=sets,
        diagnostics=diagnostics(lf, pf, lindeberg_threshold, cs_threshold),
        trace=trace,
    )
