"""
The pyoracle submodule is an exact enumeration engine for small
experiments. ``pyoracle.enumerate_paths`` walks every assignment sequence
a design can produce on a fixed population, carrying exact path
probabilities, and evaluates statistics on each complete path through
the same estimator code used everywhere else in dbadapt. From the walk it
derives exact moments (expectations and covariances over the design),
the over-all-histories quantities of each unit (smallest probability,
variance of inverse probabilities and of model predictions) and the
covariance targets of the IPW and AIPW estimators.

``pyoracle.certify_identity`` checks a finite-sample identity on one
instance and ``pyoracle.certify_all`` runs the shipped suite.
"""

import math
from dataclasses import dataclass, field

from . import common, pypop, pydesign, pymodel, pyest

import numpy as np
import pandas as pd

MAX_PATHS = 2 ** 20

CERTIFY_TOLERANCE = 1e-9

IDENTITY_TAGS = [
    'ipw-unbiased',
    'ipw-covariance',
    'ipw-covariance-dual',
    'ipw-variance-bias',
    'aipw-unbiased',
    'aipw-covariance',
    'aipw-covariance-dual',
    'aipw-variance-bias',
    'dispersion-iff',
    'bt-equal-blocks',
    'bt-unbiased',
    'bt-sharp',
    'block-unbiased',
]

def _expect(probs, values):
    """Return sum_i p_i v_i elementwise with compensated summation."""
    values = np.asarray(values, dtype=float)
    flat = values.reshape(len(probs), -1)
    out = np.array([math.fsum(probs * flat[:, j])
                    for j in range(flat.shape[1])])
    return out.reshape(values.shape[1:])

def _dispersion(probs, values):
    """Return sum_i p_i (v_i - mean)(v_i - mean)^T for vector values."""
    values = np.asarray(values, dtype=float)
    d = values - _expect(probs, values)
    outer = d[:, :, np.newaxis] * d[:, np.newaxis, :]
    return _expect(probs, outer)

def estimator_statistics(lf):
    """
    Evaluate the production estimators on one complete log.

    Returns a dict with the IPW and AIPW arm-mean estimates ('ipw',
    'aipw') and every covariance estimate defined for the log.
    """
    trace = pyest.pseudo_outcomes(lf)
    identity = np.eye(lf.num_arms)
    stats = {
        'ipw': pyest.point_estimate(trace, identity, 'ipw'),
        'aipw': pyest.point_estimate(trace, identity, 'aipw'),
    }
    if trace.num_groups < 2:
        return stats
    for kind in ['vhat_ipw', 'vhat_aipw', 'vtilde_aipw']:
        stats[kind] = pyest.covariance_estimate(trace, kind).matrix
    if np.all(trace.pi < 0.5):
        for kind in ['vhat_aipw_b', 'vtilde_aipw_b']:
            stats[kind] = pyest.covariance_estimate(trace, kind).matrix
    return stats

@dataclass
class NodeRecord:
    """
    One reachable history of the assignment tree.

    Attributes
    ----------
    prob : float
        Probability of reaching the history.
    marginals : numpy.ndarray
        (n, K) assignment probabilities of the group's units.
    predictions : numpy.ndarray
        (n, K) outcome-model predictions of the group's units.
    conditional : dict
        K x K conditional covariances of the rho-scaled group
        pseudo-outcomes given the history, keyed by 'ipw' and 'aipw'.
    """
    prob: float
    marginals: np.ndarray
    predictions: np.ndarray
    conditional: dict

@dataclass
class EnumerationResult:
    """
    Result of :func:`enumerate_paths`.

    Attributes
    ----------
    population : pypop.PopFrame
        Enumerated population.
    sizes : numpy.ndarray
        Group sizes (ones for unit designs).
    probs : numpy.ndarray
        Probability of every complete path.
    values : dict
        Statistic values per path, each an array with one row per path.
    nodes : list
        For every group, the list of NodeRecord objects of its reachable
        histories.
    """
    population: pypop.PopFrame
    sizes: np.ndarray
    probs: np.ndarray
    values: dict
    nodes: list = field(repr=False)

    @property
    def num_paths(self):
        return len(self.probs)

    @property
    def num_groups(self):
        return len(self.sizes)

    def total_probability(self):
        return math.fsum(self.probs)

    def mean(self, name):
        """Return the exact expectation of a statistic."""
        return _expect(self.probs, self.values[name])

    def covariance(self, name):
        """Return the exact covariance matrix of a vector statistic."""
        return _dispersion(self.probs, self.values[name])

    def _unit_node_stat(self, func):
        """Collect func(prob, marginal row, prediction row) per unit."""
        out = []
        for nodes, n in zip(self.nodes, self.sizes):
            for i in range(n):
                out.append([(r.prob, r.marginals[i], r.predictions[i])
                            for r in nodes])
        return [func(rows) for rows in out]

    def expected_inverse_probs(self):
        """numpy.ndarray : (N, K) exact E[1 / e_t(z)]."""
        def f(rows):
            p = np.array([r[0] for r in rows])
            return _expect(p, np.array([1 / r[1] for r in rows]))
        return np.array(self._unit_node_stat(f))

    def min_probs(self):
        """numpy.ndarray : Smallest e_t(z) over histories and arms."""
        return np.array(self._unit_node_stat(
            lambda rows: min(r[1].min() for r in rows)))

    def inverse_prob_variances(self):
        """numpy.ndarray : max_z Var(1 / e_t(z)) per unit."""
        def f(rows):
            p = np.array([r[0] for r in rows])
            inv = np.array([1 / r[1] for r in rows])
            d = inv - _expect(p, inv)
            return float(_expect(p, d ** 2).max())
        return np.array(self._unit_node_stat(f))

    def model_variances(self):
        """numpy.ndarray : max_z Var(m_t(z)) per unit."""
        def f(rows):
            p = np.array([r[0] for r in rows])
            m = np.array([r[2] for r in rows])
            d = m - _expect(p, m)
            return float(_expect(p, d ** 2).max())
        return np.array(self._unit_node_stat(f))

    def max_abs_predictions(self):
        """numpy.ndarray : M_t, the largest |m_t(z)| over histories."""
        return np.array(self._unit_node_stat(
            lambda rows: max(np.abs(r[2]).max() for r in rows)))

    def residual_moments(self):
        """
        Return exact E[A_t(z)^2 / e_t(z)] and E[A_t A_t^T] per unit.

        Here A_t(z) = Y_t(z) - m_t(z).

        Returns
        -------
        tuple
            Arrays of shape (N, K) and (N, K, K).
        """
        outcomes = self.population.outcomes
        first, second = [], []
        t = 0
        for nodes, n in zip(self.nodes, self.sizes):
            for i in range(n):
                p = np.array([r.prob for r in nodes])
                A = np.array([outcomes[t] - r.predictions[i] for r in nodes])
                e = np.array([r.marginals[i] for r in nodes])
                first.append(_expect(p, A ** 2 / e))
                second.append(_expect(p, A[:, :, np.newaxis]
                                      * A[:, np.newaxis, :]))
                t += 1
        return np.array(first), np.array(second)

    def conditional_covariance(self, estimator):
        """
        Return T^-2 sum_t E[Cov(rho_t Y_t | H_t)].

        This is a second, path-free route to the covariance of the arm
        mean estimate.
        """
        T = self.num_groups
        total = np.zeros_like(self.nodes[0][0].conditional[estimator])
        for nodes in self.nodes:
            p = np.array([r.prob for r in nodes])
            total = total + _expect(
                p, np.array([r.conditional[estimator] for r in nodes]))
        return total / T ** 2

def _path_bound(pf, design):
    if not design.is_block:
        return pf.num_arms ** pf.num_units
    bound = 1
    for n in pf.block_sizes:
        if isinstance(design, pydesign.PairwiseSequential):
            bound *= 2
        else:
            bound *= math.comb(n, design.treated_per_block)
    return bound

def _node_predictions(model, pf, x, z, y, s, n):
    """Predict the n units of the group starting at unit s."""
    state = model.start(pf.num_arms, pf.num_covariates)
    for i in range(s):
        state.update(x[i], int(z[i]), y[i])
    return np.array([state.predict(x[i], i) for i in range(s, s + n)])

def _conditional(branches, marginals, predictions, outcomes, rho):
    """Conditional covariances of the rho-scaled group pseudo-outcomes."""
    K = marginals.shape[1]
    w = np.array([b[0] for b in branches])
    values = {'ipw': [], 'aipw': []}
    rows = np.arange(len(marginals))
    for _, a in branches:
        ind = np.asarray(a)[:, np.newaxis] == np.arange(K)
        y = outcomes[rows, a][:, np.newaxis]
        ipw = np.where(ind, y / marginals, 0.0)
        aipw = ipw + (1 - ind / marginals) * predictions
        values['ipw'].append(rho * ipw.mean(axis=0))
        values['aipw'].append(rho * aipw.mean(axis=0))
    return {k: _dispersion(w, np.array(v)) for k, v in values.items()}

def enumerate_paths(
    pf, design, model=None, statistic=None, max_paths=MAX_PATHS
):
    """
    Enumerate every assignment path of a design on a population.

    The assignment tree is walked depth first. Each complete path carries
    the product of the probabilities of its assignments, and the
    statistic is evaluated on the path's log after attaching the
    adaptive predictions of the outcome model.

    Parameters
    ----------
    pf : pypop.PopFrame
        Population; block designs require block sizes.
    design : object
        Unit or block design.
    model : object, optional
        Adaptive outcome model, :class:`pymodel.Zero` by default.
    statistic : callable, optional
        Function of a :class:`pypop.LogFrame` returning an array or a
        dict of arrays; :func:`estimator_statistics` by default.
    max_paths : int, default: 2^20
        Cap on the number of paths.

    Returns
    -------
    EnumerationResult
        Path probabilities, statistic values and node records.

    Examples
    --------

    >>> from dbadapt import pypop, pydesign, pyoracle
    >>> pf = pypop.PopFrame([[1, 2], [3, 5], [0, 1]])
    >>> result = pyoracle.enumerate_paths(pf, pydesign.Bernoulli())
    >>> result.num_paths, result.total_probability()
    (8, 1.0)
    """
    if model is None:
        model = pymodel.Zero()
    if isinstance(model, pymodel.Oracle) and model.outcomes is None:
        model = model.bind(pf)
    if statistic is None:
        statistic = estimator_statistics
    if design.num_arms != pf.num_arms:
        raise common.ConfigError(
            f'Design has {design.num_arms} arms but the population has '
            f'{pf.num_arms}.')
    if design.is_block and pf.block_sizes is None:
        raise common.ConfigError(
            f'{type(design).__name__} needs a population with blocks.')
    bound = _path_bound(pf, design)
    if bound > max_paths:
        raise ValueError(f'Enumeration would visit up to {bound} paths, '
                         f'more than the cap of {max_paths}.')
    T, K = pf.num_units, pf.num_arms
    sizes = (np.array(pf.block_sizes) if design.is_block
             else np.ones(T, dtype=int))
    G = len(sizes)
    N = int(sizes.sum())
    block_sizes = pf.block_sizes if design.is_block else None
    x = pf.covariates
    z = np.zeros(T, dtype=int)
    y = np.zeros(T)
    e = np.zeros((T, K))
    probs = []
    values = []
    nodes = [[] for _ in range(G)]

    def walk(g, s, prob):
        if g == G:
            lf = pypop.LogFrame(x, z.copy(), e.copy(), y.copy(),
                                block_sizes=block_sizes, population=pf)
            lf = lf.with_predictions(pymodel.adaptive_predictions(model, lf))
            probs.append(prob)
            values.append(statistic(lf))
            return
        n = int(sizes[g])
        h = pypop.HistoryView(pypop._view(x, s), pypop._view(z, s),
                              pypop._view(y, s),
                              x[s:s + n] if design.is_block else x[s],
                              tuple(sizes[:g]) if design.is_block else None,
                              K)
        if design.is_block:
            p = design.block_assignment_probs(h)
            branches = list(zip(p.weights, p.support))
            marginals = np.array(p.marginals)
        else:
            p = design.assignment_probs(h)
            branches = [(p.probs[a], np.array([a])) for a in range(K)]
            marginals = p.probs[np.newaxis, :]
        predictions = _node_predictions(model, pf, x, z, y, s, n)
        units = np.arange(s, s + n)
        conditional = _conditional(branches, marginals, predictions,
                                   pf.outcomes[units], (G * n) / N)
        nodes[g].append(NodeRecord(prob, marginals, predictions, conditional))
        for w, a in branches:
            z[units] = a
            y[units] = pf.outcomes[units, a]
            e[units] = marginals
            walk(g + 1, s + n, prob * w)
        z[units] = 0
        y[units] = 0
        e[units] = 0

    walk(0, 0, 1.0)
    probs = np.array(probs)
    if isinstance(values[0], dict):
        values = {k: np.array([v[k] for v in values]) for k in values[0]}
    else:
        values = {'value': np.array(values)}
    return EnumerationResult(pf, sizes, probs, values, nodes)

def ipw_target(result):
    """
    Return V_ipw = diag(T^-1 sum_t E[1/e_t(z)] Y_t(z)^2) - T^-1 sum_t Y_t Y_t^T.

    Unit designs only.
    """
    _require_unit(result)
    Y = result.population.outcomes
    T = len(Y)
    inv = result.expected_inverse_probs()
    return np.diag((inv * Y ** 2).sum(axis=0) / T) - Y.T @ Y / T

def aipw_target(result):
    """
    Return V_aipw = diag(T^-1 sum_t E[A_t(z)^2 / e_t(z)]) - T^-1 sum_t E[A_t A_t^T].

    Unit designs only.
    """
    _require_unit(result)
    first, second = result.residual_moments()
    T = result.num_groups
    return np.diag(first.sum(axis=0) / T) - second.sum(axis=0) / T

def dispersion(pf):
    """Return S, the sample covariance of the potential-outcome vectors Y_t."""
    return common.sample_covariance(pf.outcomes)

def _require_unit(result):
    if result.num_groups != result.population.num_units \
            or np.any(result.sizes != 1):
        raise ValueError('This quantity is defined for unit designs only.')

def exact_condition_quantities(pf, design, model=None):
    """
    Return the exact regularity quantities of every unit.

    Parameters
    ----------
    pf : pypop.PopFrame
        Population.
    design : object
        Unit or block design.
    model : object, optional
        Adaptive outcome model, :class:`pymodel.Zero` by default.

    Returns
    -------
    pandas.DataFrame
        One row per unit with columns 'unit', 'min_prob' (smallest e_t(z)
        over histories and arms), 'v' (max_z Var(1/e_t(z))), 'omega'
        (max_z Var(m_t(z))), 'L' (max_z |Y_t(z)|) and 'M' (max |m_t(z)|).
    """
    result = enumerate_paths(pf, design, model, statistic=lambda lf: 0.0)
    return pd.DataFrame({
        'unit': np.arange(1, pf.num_units + 1),
        'min_prob': result.min_probs(),
        'v': result.inverse_prob_variances(),
        'omega': result.model_variances(),
        'L': np.abs(pf.outcomes).max(axis=1),
        'M': result.max_abs_predictions(),
    })

@dataclass(frozen=True, eq=False)
class Instance:
    """A named enumeration instance: population, design, model and contrast."""
    name: str
    population: pypop.PopFrame
    design: object
    model: object
    contrast: np.ndarray

@dataclass
class Certification:
    """Outcome of one identity check."""
    tag: str
    instance: str
    deviation: float
    passed: bool
    detail: str = ''

    def to_dict(self):
        return {'tag': self.tag, 'instance': self.instance,
                'deviation': self.deviation, 'passed': self.passed,
                'detail': self.detail}

def _max_abs(a):
    return float(np.max(np.abs(np.asarray(a, dtype=float))))

def _is_constant(v):
    v = np.atleast_2d(v)
    return bool(np.all(v.max(axis=0) - v.min(axis=0) <= 1e-12))

def certify_identity(tag, instance):
    """
    Check a finite-sample identity exactly on one instance.

    Both sides of the identity are evaluated by enumeration and the
    maximum absolute elementwise deviation is reported. A check passes
    when the deviation is at most 1e-9, except for the two equivalence
    checks ('dispersion-iff', 'bt-sharp'), whose nonconstant branch
    passes when the excess is strictly positive (above 1e-6), and
    'bt-equal-blocks', which requires bitwise equality.

    Parameters
    ----------
    tag : str
        Identity name, one of :data:`IDENTITY_TAGS`.
    instance : Instance
        Enumeration instance.

    Returns
    -------
    Certification
        Deviation and verdict.
    """
    if tag not in IDENTITY_TAGS:
        raise ValueError(f"Unknown identity tag '{tag}', expected one of "
                         f"{IDENTITY_TAGS}.")
    pf = instance.population
    C = common.check_contrast(instance.contrast, pf.num_arms)
    if tag == 'dispersion-iff':
        CY = pf.outcomes @ C.T
        excess = C @ dispersion(pf) @ C.T
        if _is_constant(CY):
            dev = _max_abs(excess)
            return Certification(tag, instance.name, dev,
                                 dev <= CERTIFY_TOLERANCE,
                                 'C Y_t constant; C S C^T must vanish')
        dev = float(np.trace(excess))
        return Certification(tag, instance.name, dev, dev > 1e-6,
                             'C Y_t not constant; C S C^T must be positive')
    result = enumerate_paths(pf, instance.design, instance.model)
    T = result.num_groups
    truth = pf.true_estimand(C)
    detail = ''
    if tag in ('ipw-unbiased', 'aipw-unbiased', 'block-unbiased'):
        name = 'ipw' if tag == 'ipw-unbiased' else 'aipw'
        dev = _max_abs(C @ result.mean(name) - truth)
    elif tag in ('ipw-covariance', 'aipw-covariance'):
        name = tag.split('-')[0]
        target = ipw_target(result) if name == 'ipw' else aipw_target(result)
        dev = _max_abs(C @ result.covariance(name) @ C.T
                       - C @ target @ C.T / T)
    elif tag in ('ipw-covariance-dual', 'aipw-covariance-dual'):
        name = tag.split('-')[0]
        dev = _max_abs(result.covariance(name)
                       - result.conditional_covariance(name))
    elif tag in ('ipw-variance-bias', 'aipw-variance-bias'):
        name = tag.split('-')[0]
        target = ipw_target(result) if name == 'ipw' else aipw_target(result)
        dev = _max_abs(C @ result.mean(f'vhat_{name}') @ C.T
                       - C @ (target + dispersion(pf)) @ C.T)
    elif tag == 'bt-equal-blocks':
        sizes = result.sizes
        if not np.all(sizes == sizes[0]):
            raise ValueError("'bt-equal-blocks' needs equal group sizes.")
        b = pyest.bt_weights(sizes)
        dev = max(_max_abs(b - 1 / (T - 1)),
                  _max_abs(result.values['vhat_aipw_b']
                           - result.values['vhat_aipw']),
                  _max_abs(result.values['vtilde_aipw_b']
                           - result.values['vtilde_aipw']))
        return Certification(tag, instance.name, dev, dev == 0.0,
                             'bitwise equality on every path')
    elif tag == 'bt-unbiased':
        b = pyest.bt_weights(result.sizes)
        means = pf.group_means() if pf.block_sizes else pf.outcomes
        d = means - result.sizes / result.sizes.sum() @ means
        bias = (d.T * b) @ d
        dev = _max_abs(result.mean('vhat_aipw_b')
                       - T * result.covariance('aipw') - bias)
    else:
        means = pf.group_means() if pf.block_sizes else pf.outcomes
        excess = (C @ result.mean('vhat_aipw_b') @ C.T
                  - T * C @ result.covariance('aipw') @ C.T)
        if _is_constant(means @ C.T):
            dev = _max_abs(excess)
            detail = 'C Ybar_t constant across groups; excess must vanish'
        else:
            dev = float(np.trace(excess))
            return Certification(tag, instance.name, dev, dev > 1e-6,
                                 'C Ybar_t varies; excess must be positive')
    return Certification(tag, instance.name, dev, dev <= CERTIFY_TOLERANCE,
                         detail)

def default_instances():
    """
    Return the shipped toy instances, keyed by name.

    Returns
    -------
    dict
        Instance objects small enough to enumerate in well under a second.
    """
    C = np.array([[-1.0, 1.0]])
    greedy = pydesign.EpsilonGreedy(
        warmup=1, explore=pydesign.ExploreSchedule('constant', 0.25))
    three = pypop.PopFrame([[1.0, 2.5], [0.5, 3.0], [2.0, 1.0]],
                           [[0.2], [-1.0], [0.7]])
    constant = pypop.PopFrame([[0.5, 2.0], [2.0, 3.5], [-1.25, 0.25]])
    perturbed = pypop.PopFrame([[0.5, 2.0], [2.0, 4.0], [-1.25, 0.25]])
    srd = pydesign.SequentialRerandomization(accept_count=2,
                                             treated_per_block=2)
    x12 = [[0.3], [-1.1], [0.8], [1.5], [-0.4], [0.0], [-2.0], [0.9],
           [0.25], [-0.6], [1.2], [-0.75]]
    y1 = [1.0, 0.0, 2.0, -1.0, 0.5, 1.5, 3.0, 0.0, 1.0, 2.0, -0.5, 0.25]
    # Within-block average effects are 1 in every block.
    effect = [0.0, 1.0, 2.0, -1.0, 1.0, 1.0, 3.0, 1.0, 1.0, 1.0, 1.0, 1.0]
    y2 = [a + b for a, b in zip(y1, effect)]
    unequal = pypop.PopFrame(np.column_stack([y1, y2]), x12, [3, 4, 5])
    bumped = np.column_stack([y1, y2])
    bumped[5, 1] += 2.0
    unequal_perturbed = pypop.PopFrame(bumped, x12, [3, 4, 5])
    equal = pypop.PopFrame(np.column_stack([y1, y2]), x12, [4, 4, 4])
    pairs = pypop.PopFrame([[1.0, 2.0], [0.0, 3.5], [2.5, 2.0], [-1.0, 0.5]],
                           [[0.4], [-0.3], [1.1], [0.2]], [2, 2])
    full = pydesign.SequentialRerandomization(accept_count=2,
                                              treated_per_block=1)
    mean = pymodel.RunningMean()
    items = [
        Instance('greedy3', three, greedy, pymodel.Zero(), C),
        Instance('greedy3-mean', three, greedy, mean, C),
        Instance('greedy3-ls', three, greedy,
                 pymodel.OnlineLeastSquares(min_obs=3), C),
        Instance('bernoulli3', three, pydesign.Bernoulli((0.3, 0.7)),
                 pymodel.Zero(), C),
        Instance('constant-effect', constant, greedy, pymodel.Zero(), C),
        Instance('perturbed-effect', perturbed, greedy, pymodel.Zero(), C),
        Instance('equal-blocks', equal, srd, mean, C),
        Instance('unequal-blocks', unequal, srd, mean, C),
        Instance('unequal-blocks-perturbed', unequal_perturbed, srd, mean, C),
        Instance('pairs', pairs, full, mean, C),
    ]
    return {i.name: i for i in items}

SUITE = [
    ('ipw-unbiased', 'greedy3'),
    ('ipw-unbiased', 'bernoulli3'),
    ('ipw-covariance', 'greedy3'),
    ('ipw-covariance', 'bernoulli3'),
    ('ipw-covariance-dual', 'greedy3'),
    ('ipw-variance-bias', 'greedy3'),
    ('aipw-unbiased', 'greedy3'),
    ('aipw-unbiased', 'greedy3-mean'),
    ('aipw-unbiased', 'greedy3-ls'),
    ('aipw-covariance', 'greedy3-mean'),
    ('aipw-covariance-dual', 'greedy3-mean'),
    ('aipw-variance-bias', 'greedy3-mean'),
    ('dispersion-iff', 'constant-effect'),
    ('dispersion-iff', 'perturbed-effect'),
    ('bt-equal-blocks', 'equal-blocks'),
    ('bt-unbiased', 'unequal-blocks'),
    ('bt-unbiased', 'unequal-blocks-perturbed'),
    ('bt-sharp', 'unequal-blocks'),
    ('bt-sharp', 'unequal-blocks-perturbed'),
    ('block-unbiased', 'unequal-blocks'),
    ('block-unbiased', 'pairs'),
]

def certify_all(instances=None):
    """
    Run the shipped identity suite.

    Parameters
    ----------
    instances : dict, optional
        Instances by name, :func:`default_instances` by default.

    Returns
    -------
    list
        Certification objects, one per (identity, instance) pair.
    """
    if instances is None:
        instances = default_instances()
    return [certify_identity(tag, instances[name]) for tag, name in SUITE]
