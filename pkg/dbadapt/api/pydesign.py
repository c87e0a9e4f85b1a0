"""
The pydesign submodule implements adaptive randomization designs. A unit
design maps the history of earlier units to assignment probabilities
e_t(.) for the next unit; a block design maps the history of earlier
groups to a joint distribution over the assignments of the next group,
from which per-unit marginals e_ti(.) follow. Every design is a pure
function of its history, which is what allows the enumeration oracle in
``pyoracle`` to walk all assignment paths.

Unit designs: ``Bernoulli``, ``EpsilonGreedy`` and ``EfronBiasedCoin``.
Block designs: ``PairwiseSequential``, ``SequentialRerandomization`` and
``CompleteRandomization``.
"""

import functools
import itertools
from dataclasses import dataclass, field, asdict

from . import common, pypop

import numpy as np

SIMPLEX_TOLERANCE = 1e-12

class AssignmentProbs:
    """
    Assignment probabilities e_t(.) of a single unit.

    Every entry must lie in the open interval (0, 1) and the entries must
    sum to one within 1e-12.

    Parameters
    ----------
    probs : array-like
        K-vector of probabilities.
    """
    def __init__(self, probs):
        probs = np.array(probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError('Assignment probabilities must be a K-vector '
                             'with K >= 2.')
        if np.any(probs <= 0) or np.any(probs >= 1):
            raise ValueError('Assignment probabilities must lie strictly '
                             f'between 0 and 1: {probs}')
        if abs(probs.sum() - 1) > SIMPLEX_TOLERANCE:
            raise ValueError('Assignment probabilities must sum to one: '
                             f'{probs}')
        probs.setflags(write=False)
        self._probs = probs

    @property
    def probs(self):
        return self._probs

    @property
    def num_arms(self):
        return self._probs.size

    def __repr__(self):
        return f'AssignmentProbs({self._probs.tolist()})'

class BlockAssignmentProbs:
    """
    Joint assignment distribution of one group of units.

    Parameters
    ----------
    support : array-like
        Integer matrix of shape (m, n); row i is a candidate assignment
        vector (0-based arms) for the n units of the group.
    weights : array-like
        Probabilities of the m candidates, summing to one within 1e-12.
    num_arms : int, default: 2
        Number of arms K.
    """
    def __init__(self, support, weights, num_arms=2):
        support = np.array(support, dtype=int)
        weights = np.array(weights, dtype=float)
        if support.ndim != 2 or weights.shape != (support.shape[0],):
            raise ValueError('Support must be an (m, n) matrix with one '
                             'weight per row.')
        if np.any(weights <= 0):
            raise ValueError('Candidate assignments must have positive '
                             'probability.')
        if abs(weights.sum() - 1) > SIMPLEX_TOLERANCE:
            raise ValueError('Joint assignment probabilities must sum to '
                             'one.')
        if np.any((support < 0) | (support >= num_arms)):
            raise ValueError(f'Assignments must be arms 0..{num_arms-1}.')
        marginals = np.column_stack(
            [weights @ (support == z) for z in range(num_arms)])
        if np.any(marginals <= 0) or np.any(marginals >= 1):
            raise ValueError('Every unit must have every arm with '
                             'probability strictly between 0 and 1.')
        for a in (support, weights, marginals):
            a.setflags(write=False)
        self._support = support
        self._weights = weights
        self._marginals = marginals

    @property
    def support(self):
        return self._support

    @property
    def weights(self):
        return self._weights

    @property
    def marginals(self):
        """numpy.ndarray : Per-unit marginals e_ti(z) of shape (n, K)."""
        return self._marginals

    @property
    def num_arms(self):
        return self._marginals.shape[1]

    def __len__(self):
        return len(self._weights)

@dataclass(frozen=True)
class ExploreSchedule:
    """
    Exploration probability epsilon_t of the epsilon-greedy design.

    Parameters
    ----------
    kind : {'power', 'constant'}
        'power' uses epsilon_t = t^(-1/2 + value) with value < 1/2;
        'constant' uses epsilon_t = value with value in (0, 1/2].
    value : float
        Exponent shift delta or constant epsilon.
    """
    kind: str = 'power'
    value: float = 0.0

    def __post_init__(self):
        if self.kind == 'power':
            if not self.value < 0.5:
                raise common.ConfigError(
                    f'Power schedule needs delta < 1/2: {self.value}')
        elif self.kind == 'constant':
            if not 0 < self.value <= 0.5:
                raise common.ConfigError(
                    f'Constant schedule needs epsilon in (0, 1/2]: '
                    f'{self.value}')
        else:
            raise common.ConfigError(
                f"Unknown schedule '{self.kind}', expected 'power' or "
                f"'constant'.")

    def epsilon(self, t):
        if self.kind == 'constant':
            return self.value
        return t ** (-0.5 + self.value)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        kind = data.pop('kind', 'power')
        key = 'delta' if kind == 'power' else 'epsilon'
        if set(data) - {key}:
            raise common.ConfigError(
                f'Unknown schedule keys: {sorted(set(data) - {key})}')
        return cls(kind, float(data.get(key, 0.0)))

    def to_dict(self):
        key = 'delta' if self.kind == 'power' else 'epsilon'
        return {'kind': self.kind, key: self.value}

def _check_bias(bias):
    if not 0.5 < bias < 1:
        raise common.ConfigError(f'Bias must lie in (1/2, 1): {bias}')

@dataclass(frozen=True)
class Bernoulli:
    """Nonadaptive design assigning every unit with fixed probabilities."""
    probs: tuple = (0.5, 0.5)
    is_block = False

    def __post_init__(self):
        object.__setattr__(self, 'probs', tuple(float(p) for p in self.probs))
        try:
            AssignmentProbs(self.probs)
        except ValueError as e:
            raise common.ConfigError(str(e))

    @property
    def num_arms(self):
        return len(self.probs)

    def assignment_probs(self, history):
        return AssignmentProbs(self.probs)

@dataclass(frozen=True)
class EpsilonGreedy:
    """
    Epsilon-greedy bandit design.

    Units t <= warmup are assigned uniformly. Afterwards the leading arm,
    the one with the highest sample mean of observed outcomes, receives
    probability 1 - epsilon_t and every other arm epsilon_t / (K - 1).
    Ties go to the lowest arm index. Arms without observations are never
    leading unless no arm has been observed.

    Parameters
    ----------
    warmup : int, default: 50
        Number of uniformly assigned units.
    explore : ExploreSchedule
        Exploration schedule.
    num_arms : int, default: 2
        Number of arms K.
    """
    warmup: int = 50
    explore: ExploreSchedule = field(default_factory=ExploreSchedule)
    num_arms: int = 2
    is_block = False

    def __post_init__(self):
        if int(self.warmup) < 1:
            raise common.ConfigError(f'Warmup must be at least 1: {self.warmup}')
        if int(self.num_arms) < 2:
            raise common.ConfigError('Need at least two arms.')

    def leading_arm(self, history):
        means = np.full(self.num_arms, -np.inf)
        for z in range(self.num_arms):
            y = history.y_past[history.z_past == z]
            if y.size:
                means[z] = y.mean()
        if np.all(np.isneginf(means)):
            return 0
        return int(np.argmax(means))

    def assignment_probs(self, history):
        K = self.num_arms
        t = history.t
        if t <= self.warmup:
            return AssignmentProbs(np.full(K, 1 / K))
        eps = self.explore.epsilon(t)
        probs = np.full(K, eps / (K - 1))
        probs[self.leading_arm(history)] = 1 - eps
        return AssignmentProbs(probs)

@dataclass(frozen=True)
class EfronBiasedCoin:
    """
    Covariate-stratified biased-coin design for two arms.

    Units are stratified by the sign pattern of their covariates. Within
    the stratum of the current unit the imbalance is the number of earlier
    units on arm 2 minus the number on arm 1; the under-represented arm
    receives probability ``bias``, and a balanced stratum gives 1/2.
    """
    bias: float = 2 / 3
    num_arms = 2
    is_block = False

    def __post_init__(self):
        _check_bias(self.bias)

    def imbalance(self, history):
        x_now = np.asarray(history.x_now) > 0
        same = np.all((history.x_past > 0) == x_now, axis=1)
        z = history.z_past[same]
        return int(np.sum(z == 1) - np.sum(z == 0))

    def assignment_probs(self, history):
        d = self.imbalance(history)
        if d < 0:
            p = self.bias
        elif d > 0:
            p = 1 - self.bias
        else:
            p = 0.5
        return AssignmentProbs([1 - p, p])

@functools.lru_cache(maxsize=None)
def _balanced_support(n, k):
    """Return every 0/1 vector of length n with k ones, lexicographically."""
    combos = list(itertools.combinations(range(n), k))
    support = np.zeros((len(combos), n), dtype=int)
    for i, c in enumerate(combos):
        support[i, list(c)] = 1
    support.setflags(write=False)
    return support

def _check_treated(n, k):
    if not 1 <= k <= n - 1:
        raise common.ConfigError(
            f'Treated units per block must lie in [1, {n-1}] for a block '
            f'of {n}: {k}')

def _regularize(cov):
    """Add a ridge to a singular covariance matrix."""
    J = cov.shape[0]
    eig = np.linalg.eigvalsh(cov)
    if eig[-1] > 0 and eig[0] > common.EIGEN_TOLERANCE * eig[-1]:
        return cov
    trace = np.trace(cov)
    ridge = 1e-8 * trace / J if trace > 0 else 1e-8
    return cov + ridge * np.eye(J)

def _quadratic_forms(d, cov):
    """Return d_i^T cov^-1 d_i for every row of d."""
    cov = _regularize(np.atleast_2d(cov))
    return np.sum(d * np.linalg.solve(cov, d.T).T, axis=1)

def mahalanobis_imbalance(treated_mean, control_mean, pooled_cov):
    """
    Return the Mahalanobis distance d^T S^-1 d between covariate means.

    Here d is the difference between the treated and control covariate
    means. A singular S is regularized by adding 1e-8 * trace(S) / J
    times the identity.

    Parameters
    ----------
    treated_mean, control_mean : array-like
        J-vectors of covariate means.
    pooled_cov : array-like
        Symmetric positive semidefinite J x J covariance matrix.

    Returns
    -------
    float
        Mahalanobis imbalance.

    Examples
    --------

    >>> from dbadapt import pydesign
    >>> pydesign.mahalanobis_imbalance([2.0], [0.0], [[4.0]])
    1.0
    """
    d = np.atleast_1d(np.asarray(treated_mean, dtype=float)
                      - np.asarray(control_mean, dtype=float))
    cov = np.atleast_2d(np.asarray(pooled_cov, dtype=float))
    if cov.shape != (d.size, d.size):
        raise ValueError(f'Covariance shape {cov.shape} does not match '
                         f'mean length {d.size}.')
    if d.size == 0:
        return 0.0
    return float(_quadratic_forms(d[np.newaxis, :], cov)[0])

def _candidate_scores(history, support):
    """
    Score candidate group assignments by covariate imbalance.

    Each candidate is scored by the Mahalanobis distance between treated
    (arm index 1) and control means over every unit of groups 1..t, with
    earlier assignments held fixed.
    """
    x_now = np.atleast_2d(history.x_now)
    n, J = x_now.shape
    if J == 0:
        return np.zeros(len(support))
    x_past = np.asarray(history.x_past).reshape(-1, J)
    x_all = np.vstack([x_past, x_now])
    cov = np.atleast_2d(np.cov(x_all, rowvar=False))
    treated = history.z_past == 1
    treated_sum = x_past[treated].sum(axis=0) + support @ x_now
    control_sum = x_past[~treated].sum(axis=0) + (1 - support) @ x_now
    num_treated = treated.sum() + support.sum(axis=1)
    num_control = (~treated).sum() + n - support.sum(axis=1)
    d = (treated_sum / num_treated[:, np.newaxis]
         - control_sum / num_control[:, np.newaxis])
    return _quadratic_forms(d, cov)

@dataclass(frozen=True)
class PairwiseSequential:
    """
    Pairwise sequential randomization for groups of two units.

    Of the two assignments treating exactly one unit of the pair, the one
    leaving the smaller running Mahalanobis imbalance is chosen with
    probability ``bias``. Equal imbalances give 1/2 each.
    """
    bias: float = 0.75
    num_arms = 2
    is_block = True

    def __post_init__(self):
        _check_bias(self.bias)

    def block_assignment_probs(self, history, block_covariates=None):
        if block_covariates is not None:
            history = _with_block(history, block_covariates)
        if np.atleast_2d(history.x_now).shape[0] != 2:
            raise common.ConfigError(
                'Pairwise sequential randomization needs groups of two.')
        support = _balanced_support(2, 1)
        s = _candidate_scores(history, support)
        if s[0] < s[1]:
            weights = [self.bias, 1 - self.bias]
        elif s[1] < s[0]:
            weights = [1 - self.bias, self.bias]
        else:
            weights = [0.5, 0.5]
        return BlockAssignmentProbs(support, weights)

@dataclass(frozen=True)
class SequentialRerandomization:
    """
    Sequential rerandomization within blocks.

    All assignments treating ``treated_per_block`` units of the group are
    ranked by covariate imbalance (stable, lexicographic order on ties)
    and the ``accept_count`` best are accepted. If some unit would then
    have zero probability for an arm, the next-best assignments are added
    one at a time until every unit has both arms with positive
    probability. The accepted assignments are drawn uniformly.

    Parameters
    ----------
    accept_count : int, default: 7
        Number of accepted candidate assignments.
    treated_per_block : int, default: 4
        Units on arm 2 in every group.
    """
    accept_count: int = 7
    treated_per_block: int = 4
    num_arms = 2
    is_block = True

    def __post_init__(self):
        if int(self.accept_count) < 1:
            raise common.ConfigError(
                f'Accept count must be at least 1: {self.accept_count}')
        if int(self.treated_per_block) < 1:
            raise common.ConfigError('Treated units per block must be at '
                                     f'least 1: {self.treated_per_block}')

    def accepted(self, history):
        """Return (support, scores) of every candidate and the accepted rows."""
        n = np.atleast_2d(history.x_now).shape[0]
        _check_treated(n, self.treated_per_block)
        support = _balanced_support(n, self.treated_per_block)
        scores = _candidate_scores(history, support)
        order = np.argsort(scores, kind='stable')
        size = min(self.accept_count, len(order))
        while True:
            counts = support[order[:size]].sum(axis=0)
            if np.all((counts > 0) & (counts < size)):
                break
            size += 1
        return support, np.sort(order[:size])

    def block_assignment_probs(self, history, block_covariates=None):
        if block_covariates is not None:
            history = _with_block(history, block_covariates)
        support, rows = self.accepted(history)
        return BlockAssignmentProbs(support[rows],
                                    np.full(len(rows), 1 / len(rows)))

@dataclass(frozen=True)
class CompleteRandomization:
    """Blocked complete randomization: uniform over balanced assignments."""
    treated_per_block: int = 4
    num_arms = 2
    is_block = True

    def block_assignment_probs(self, history, block_covariates=None):
        if block_covariates is not None:
            history = _with_block(history, block_covariates)
        n = np.atleast_2d(history.x_now).shape[0]
        _check_treated(n, self.treated_per_block)
        support = _balanced_support(n, self.treated_per_block)
        return BlockAssignmentProbs(support, np.full(len(support),
                                                     1 / len(support)))

def _with_block(history, block_covariates):
    return pypop.HistoryView(history.x_past, history.z_past,
                             history.y_past, np.asarray(block_covariates),
                             history.past_sizes, history.num_arms)

DESIGNS = {
    'bernoulli': Bernoulli,
    'epsilon_greedy': EpsilonGreedy,
    'efron': EfronBiasedCoin,
    'pairwise': PairwiseSequential,
    'rerandomization': SequentialRerandomization,
    'complete': CompleteRandomization,
}

def design_from_dict(data):
    """
    Construct a design from a config dict.

    Parameters
    ----------
    data : dict
        Dict with a 'kind' key (one of 'bernoulli', 'epsilon_greedy',
        'efron', 'pairwise', 'rerandomization', 'complete') and the
        design's parameters. The epsilon-greedy 'explore' entry is itself
        a dict such as ``{'kind': 'power', 'delta': 0.0}``.

    Returns
    -------
    object
        Design instance.

    Examples
    --------

    >>> from dbadapt import pydesign
    >>> pydesign.design_from_dict({'kind': 'rerandomization', 'accept_count': 7})
    SequentialRerandomization(accept_count=7, treated_per_block=4)
    """
    data = dict(data)
    kind = data.pop('kind', None)
    if kind not in DESIGNS:
        raise common.ConfigError(
            f"Unknown design '{kind}', expected one of {sorted(DESIGNS)}.")
    if 'explore' in data:
        data['explore'] = ExploreSchedule.from_dict(data['explore'])
    if 'probs' in data:
        data['probs'] = tuple(data['probs'])
    try:
        return DESIGNS[kind](**data)
    except TypeError as e:
        raise common.ConfigError(f"Bad parameters for design '{kind}': {e}")

def design_to_dict(design):
    """Return the config dict of a design (inverse of design_from_dict)."""
    kind = {v: k for k, v in DESIGNS.items()}[type(design)]
    data = asdict(design)
    if isinstance(design, EpsilonGreedy):
        data['explore'] = design.explore.to_dict()
    if 'probs' in data:
        data['probs'] = list(data['probs'])
    return {'kind': kind, **data}

def assignment_probs(design, history):
    """
    Return the assignment probabilities of a unit design.

    Parameters
    ----------
    design : Bernoulli, EpsilonGreedy or EfronBiasedCoin
        Unit design.
    history : pypop.HistoryView
        History before the current unit.

    Returns
    -------
    AssignmentProbs
        Probabilities e_t(.). Equal histories give bitwise-equal results.
    """
    if design.is_block:
        raise TypeError(f'{type(design).__name__} is a block design.')
    return design.assignment_probs(history)

def block_assignment_probs(design, history, block_covariates=None):
    """
    Return the joint assignment distribution of a block design.

    Parameters
    ----------
    design : PairwiseSequential, SequentialRerandomization or CompleteRandomization
        Block design.
    history : pypop.HistoryView
        History before the current group.
    block_covariates : array-like, optional
        Covariates of the current group; defaults to ``history.x_now``.

    Returns
    -------
    BlockAssignmentProbs
        Joint distribution and per-unit marginals.
    """
    if not design.is_block:
        raise TypeError(f'{type(design).__name__} is not a block design.')
    return design.block_assignment_probs(history, block_covariates)

def _draw(p, rng):
    i = int(np.searchsorted(np.cumsum(p), rng.random(), side='right'))
    return min(i, len(p) - 1)

def sample_assignment(probs, rng):
    """
    Draw an assignment by inverting the cumulative distribution.

    Parameters
    ----------
    probs : AssignmentProbs or BlockAssignmentProbs
        Distribution to draw from.
    rng : numpy.random.Generator
        Random number generator.

    Returns
    -------
    int or numpy.ndarray
        0-based arm, or assignment vector of the group.
    """
    if isinstance(probs, BlockAssignmentProbs):
        return np.array(probs.support[_draw(probs.weights, rng)])
    return _draw(probs.probs, rng)

def run_design(pf, design, rng):
    """
    Run one adaptive experiment on a fixed population.

    Parameters
    ----------
    pf : pypop.PopFrame
        Population; block designs require block sizes.
    design : object
        Unit or block design.
    rng : numpy.random.Generator
        Random number generator driving the assignments.

    Returns
    -------
    pypop.LogFrame
        Experiment log with zero outcome-model predictions.
    """
    if design.num_arms != pf.num_arms:
        raise common.ConfigError(
            f'Design has {design.num_arms} arms but the population has '
            f'{pf.num_arms}.')
    T, K = pf.num_units, pf.num_arms
    x = pf.covariates
    z = np.zeros(T, dtype=int)
    y = np.zeros(T)
    e = np.zeros((T, K))
    if not design.is_block:
        for t in range(T):
            h = pypop.HistoryView(pypop._view(x, t), pypop._view(z, t),
                                  pypop._view(y, t), x[t], num_arms=K)
            p = design.assignment_probs(h)
            a = sample_assignment(p, rng)
            e[t] = p.probs
            z[t] = a
            y[t] = pf.outcomes[t, a]
        return pypop.LogFrame(x, z, e, y, population=pf)
    if pf.block_sizes is None:
        raise common.ConfigError(
            f'{type(design).__name__} needs a population with blocks.')
    s = 0
    for g, n in enumerate(pf.block_sizes):
        h = pypop.HistoryView(pypop._view(x, s), pypop._view(z, s),
                              pypop._view(y, s), x[s:s + n],
                              pf.block_sizes[:g], K)
        p = design.block_assignment_probs(h)
        a = sample_assignment(p, rng)
        e[s:s + n] = p.marginals
        z[s:s + n] = a
        y[s:s + n] = pf.outcomes[np.arange(s, s + n), a]
        s += n
    return pypop.LogFrame(x, z, e, y, block_sizes=pf.block_sizes,
                          population=pf)
