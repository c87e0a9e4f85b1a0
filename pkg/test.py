import io
import os
import json
import tempfile
import unittest
import warnings
import subprocess

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import stats

from dbadapt.api.common import DBADAPT_PATH
from dbadapt import common, pypop, pydesign, pymodel, pyest, pyoracle, pystudy

pop_file1 = f'{DBADAPT_PATH}/data/pop/1.csv'
pop_file2 = f'{DBADAPT_PATH}/data/pop/2.csv'
log_file1 = f'{DBADAPT_PATH}/data/log/1.csv'
log_degenerate = f'{DBADAPT_PATH}/data/log/degenerate.csv'
log_ragged = f'{DBADAPT_PATH}/data/log/ragged.csv'
analyze_file1 = f'{DBADAPT_PATH}/data/analyze/1.json'
analyze_degenerate = f'{DBADAPT_PATH}/data/analyze/degenerate.json'
config_dir = f'{DBADAPT_PATH}/data/config'

FULL_SCALE = os.environ.get('DBADAPT_FULL_SCALE') == '1'

C = np.array([[-1.0, 1.0]])

def random_history(rng, J=1, max_past=100, K=2):
    s = int(rng.integers(0, max_past + 1))
    return pypop.HistoryView(rng.standard_normal((s, J)),
                             rng.integers(0, K, s),
                             rng.standard_normal(s),
                             rng.standard_normal(J), num_arms=K)

def random_block_history(rng, n=8, max_groups=10):
    g = int(rng.integers(0, max_groups + 1))
    s = g * n
    return pypop.HistoryView(rng.standard_normal((s, 1)),
                             rng.integers(0, 2, s),
                             rng.standard_normal(s),
                             rng.standard_normal((n, 1)),
                             tuple([n] * g), 2)

def small_spec(**kwargs):
    data = {
        'population': {'tag': 'linear', 'size': 60, 'seed': 3},
        'design': {'kind': 'bernoulli'},
        'strategies': ['ipw', 'sm',
                       {'kind': 'aipw', 'model': 'least_squares'},
                       {'kind': 'aipw', 'model': 'least_squares',
                        'variance': 'vtilde'},
                       {'kind': 'all', 'model': 'least_squares'},
                       {'kind': 'cf', 'model': 'least_squares',
                        'bonferroni': True},
                       {'kind': 'cf', 'model': 'least_squares'}],
        'contrast': [[-1, 1]],
        'replications': 12,
        'base_seed': 5,
    }
    data.update(kwargs)
    return pystudy.StudySpec.from_dict(data)

class TestCommon(unittest.TestCase):

    def test_chi2_quantile(self):
        self.assertAlmostEqual(common.chi2_quantile(0.95, 1), 3.841458821, places=8)
        self.assertAlmostEqual(common.chi2_quantile(0.95, 2), 5.991464547, places=8)
        self.assertAlmostEqual(common.chi2_quantile(0.975, 1), 5.023886187, places=8)

    def test_check_contrast_rank(self):
        with self.assertRaises(common.ConfigError):
            common.check_contrast([[1, -1], [2, -2]])

    def test_check_contrast_columns(self):
        with self.assertRaises(ValueError):
            common.check_contrast([-1, 1], num_arms=3)

    def test_parse_contrast(self):
        C = common.parse_contrast('-1,1,0;0,-1,1')
        self.assertEqual(C.shape, (2, 3))
        self.assertEqual(common.parse_contrast([-1, 1]).shape, (1, 2))

    def test_sample_covariance(self):
        v = np.random.default_rng(0).standard_normal((20, 3))
        self.assertTrue(np.allclose(common.sample_covariance(v), np.cov(v, rowvar=False)))

    def test_read_json_missing(self):
        with self.assertRaisesRegex(common.ConfigError, 'does not exist'):
            common.read_json(f'{DBADAPT_PATH}/data/missing.json')

class TestPypop(unittest.TestCase):

    def test_shape(self):
        pf = pypop.PopFrame.from_file(pop_file1)
        self.assertEqual(pf.shape, (6, 2, 1))

    def test_true_estimand(self):
        pf = pypop.PopFrame.from_file(pop_file1)
        self.assertAlmostEqual(pf.true_estimand([-1, 1])[0], 1.75)
        self.assertTrue(np.allclose(pf.true_estimand(np.eye(2)), [1.625, 3.375]))

    def test_true_estimand_two_units(self):
        pf = pypop.PopFrame([[0.0, 1.0], [2.0, 5.0]])
        self.assertEqual(pf.true_estimand([-1, 1]).tolist(), [2.0])

    def test_true_estimand_linear(self):
        pf = pypop.generate_population({'tag': 'linear', 'size': 50}, 8)
        A = np.array([[2.0, 1.0], [0.0, 3.0]])
        B = np.array([[-1.0, 1.0], [1.0, 1.0]])
        self.assertTrue(np.allclose(pf.true_estimand(A @ B), A @ pf.true_estimand(B)))
        self.assertTrue(np.allclose(pf.true_estimand(2 * B + C[[0, 0]]),
                                    2 * pf.true_estimand(B) + pf.true_estimand(C)[0]))

    def test_rerandomization_null_effect(self):
        dgp = pypop.DgpSpec('rerandomization', num_blocks=4, block_size=8)
        pf = pypop.generate_population(dgp, 9)
        self.assertEqual(pf.true_estimand(C).tolist(), [0.0])

    def test_to_string(self):
        pf = pypop.PopFrame.from_file(pop_file1)
        with open(pop_file1) as f:
            self.assertEqual(pf.to_string(), f.read())

    def test_write_read(self):
        pf = pypop.generate_population({'tag': 'linear', 'size': 30}, 7)
        with tempfile.TemporaryDirectory() as t:
            pf.to_file(f'{t}/pop.csv')
            other = pypop.PopFrame.from_file(f'{t}/pop.csv')
        self.assertTrue(np.array_equal(pf.outcomes, other.outcomes))
        self.assertTrue(np.array_equal(pf.covariates, other.covariates))

    def test_blocks(self):
        pf = pypop.PopFrame.from_file(pop_file2)
        self.assertEqual(pf.block_sizes, (4, 4, 4))
        self.assertEqual(pf.group_means().shape, (3, 2))

    def test_generate_prefix(self):
        a = pypop.generate_population({'tag': 'linear', 'size': 10}, 1)
        b = pypop.generate_population({'tag': 'linear', 'size': 20}, 1)
        self.assertTrue(np.array_equal(a.outcomes, b.outcomes[:10]))

    def test_generate_rerandomization(self):
        dgp = pypop.DgpSpec('rerandomization', num_blocks=5, block_size=8)
        pf = pypop.generate_population(dgp, 2)
        self.assertEqual(pf.block_sizes, (8,) * 5)
        self.assertTrue(np.array_equal(pf.outcomes[:, 0], pf.outcomes[:, 1]))

    def test_generate_trend(self):
        pf = pypop.generate_population({'tag': 'trend', 'size': 200}, 1)
        self.assertEqual(pf.shape, (200, 2, 0))

    def test_generate_shared_noise(self):
        a = pypop.generate_population({'tag': 'linear', 'size': 40, 'noise': 'shared'}, 5)
        b = pypop.generate_population({'tag': 'linear', 'size': 40}, 5)
        x = a.covariates[:, 0]
        self.assertTrue(np.allclose(a.outcomes[:, 1] - a.outcomes[:, 0], 2 * x))
        self.assertTrue(np.array_equal(a.outcomes[:, 0], b.outcomes[:, 0]))
        self.assertFalse(np.allclose(b.outcomes[:, 1] - b.outcomes[:, 0], 2 * x))
        dgp = pypop.DgpSpec('linear', size=40, noise='shared')
        self.assertEqual(pypop.DgpSpec.from_dict(dgp.to_dict()), dgp)
        self.assertEqual(dgp.scaled(10, 2).noise, 'shared')

    def test_noise_errors(self):
        with self.assertRaises(common.ConfigError):
            pypop.DgpSpec('trend', size=10, noise='shared')
        with self.assertRaises(common.ConfigError):
            pypop.DgpSpec('linear', size=10, noise='correlated')

    def test_empty_population(self):
        with self.assertRaisesRegex(common.ConfigError, 'at least one unit'):
            pypop.PopFrame(np.empty((0, 2)))

    def test_ragged(self):
        with self.assertRaises(common.ConfigError):
            pypop.LogFrame.from_file(log_ragged)

    def test_unit_column(self):
        with tempfile.TemporaryDirectory() as t:
            with open(f'{t}/pop.csv', 'w') as f:
                f.write('unit,y1,y2\n2,1,2\n1,3,4\n')
            with open(f'{t}/log.csv', 'w') as f:
                f.write('unit,z,e1,e2,y\n1,1,0.5,0.5,1\n3,2,0.5,0.5,2\n')
            with self.assertRaisesRegex(common.ConfigError, "row 1 has unit '2'"):
                pypop.PopFrame.from_file(f'{t}/pop.csv')
            with self.assertRaisesRegex(common.ConfigError, "row 2 has unit '3'"):
                pypop.LogFrame.from_file(f'{t}/log.csv')

    def test_history_num_arms(self):
        lf = pypop.LogFrame(np.empty((4, 0)), [0, 1, 0, 1], np.full((4, 3), 1 / 3), [1.0, 2.0, 3.0, 4.0])
        self.assertEqual(lf.history(4).num_arms, 3)

    def test_log_from_file(self):
        lf = pypop.LogFrame.from_file(log_file1)
        self.assertEqual(lf.z.tolist(), [0, 1, 0, 1, 1, 0])
        self.assertEqual(lf.num_arms, 2)
        self.assertEqual(lf.df['z'].tolist(), [1, 2, 1, 2, 2, 1])

    def test_history(self):
        lf = pypop.LogFrame.from_file(log_file1)
        h = lf.history(3)
        self.assertEqual(h.t, 3)
        self.assertEqual(h.num_past, 2)
        self.assertFalse(h.y_past.flags.writeable)

    def test_zero_probability(self):
        with self.assertRaises(common.DegeneracyError):
            pypop.LogFrame([[0.0]], [0], [[1.0, 0.0]], [1.0])

class TestPydesign(unittest.TestCase):

    def test_warmup(self):
        design = pydesign.EpsilonGreedy()
        h = random_history(np.random.default_rng(0), max_past=0)
        self.assertEqual(design.assignment_probs(h).probs.tolist(), [0.5, 0.5])

    def test_leading_arm(self):
        design = pydesign.EpsilonGreedy(
            warmup=50, explore=pydesign.ExploreSchedule('constant', 0.2))
        z = np.arange(60) % 2
        y = np.where(z == 1, 2.0, 1.0)
        h = pypop.HistoryView(np.empty((60, 0)), z, y, np.empty(0))
        self.assertTrue(np.allclose(design.assignment_probs(h).probs, [0.2, 0.8]))

    def test_power_schedule(self):
        explore = pydesign.ExploreSchedule('power', 0.0)
        self.assertAlmostEqual(explore.epsilon(100), 0.1)

    def test_efron(self):
        design = pydesign.EfronBiasedCoin()
        h = pypop.HistoryView(np.array([[1.0], [1.0], [-1.0]]),
                              np.array([1, 1, 0]), np.zeros(3), np.array([2.0]))
        self.assertEqual(design.imbalance(h), 2)
        self.assertAlmostEqual(design.assignment_probs(h).probs[1], 1 / 3)

    def test_unit_simplex(self):
        rng = np.random.default_rng(1)
        designs = [
            pydesign.Bernoulli((0.3, 0.7)),
            pydesign.EpsilonGreedy(warmup=5),
            pydesign.EpsilonGreedy(warmup=5, explore=pydesign.ExploreSchedule('power', -0.4), num_arms=3),
            pydesign.EfronBiasedCoin(),
        ]
        for i in range(10000):
            design = designs[i % len(designs)]
            h = random_history(rng, K=design.num_arms)
            p = pydesign.assignment_probs(design, h).probs
            self.assertTrue(np.all(p > 0) and np.all(p < 1))
            self.assertLessEqual(abs(p.sum() - 1), 1e-12)

    def test_block_simplex(self):
        rng = np.random.default_rng(2)
        srd = pydesign.SequentialRerandomization()
        crd = pydesign.CompleteRandomization()
        for i in range(300):
            h = random_block_history(rng)
            for design in [srd, crd]:
                p = pydesign.block_assignment_probs(design, h)
                self.assertTrue(np.all(p.marginals > 0) and np.all(p.marginals < 1))
                self.assertTrue(np.all(p.support.sum(axis=1) == 4))
                self.assertLessEqual(abs(p.weights.sum() - 1), 1e-12)
        pair = pydesign.PairwiseSequential()
        for i in range(300):
            p = pydesign.block_assignment_probs(pair, random_block_history(rng, n=2))
            self.assertTrue(np.allclose(p.marginals.sum(axis=1), 1))

    def test_srd_accepts_best(self):
        rng = np.random.default_rng(3)
        h = random_block_history(rng, max_groups=3)
        support, rows = pydesign.SequentialRerandomization().accepted(h)
        self.assertEqual(len(support), 70)
        self.assertGreaterEqual(len(rows), 7)

    def test_srd_full_acceptance(self):
        h = random_block_history(np.random.default_rng(4))
        a = pydesign.SequentialRerandomization(accept_count=70).block_assignment_probs(h)
        b = pydesign.CompleteRandomization().block_assignment_probs(h)
        self.assertTrue(np.array_equal(a.support, b.support))
        self.assertTrue(np.allclose(a.marginals, 0.5))

    def test_srd_expansion(self):
        # Unit 1 alone carries the covariate, so all 70 scores tie and the
        # 35 lexicographically first assignments treat it.
        x_now = np.zeros((8, 1))
        x_now[0, 0] = 10.0
        h = pypop.HistoryView(np.empty((0, 1)), np.empty(0, dtype=int), np.empty(0), x_now, (), 2)
        support, rows = pydesign.SequentialRerandomization().accepted(h)
        self.assertEqual(rows.tolist(), list(range(36)))
        self.assertTrue(np.all(support[:35, 0] == 1))
        self.assertEqual(support[35].tolist(), [0, 1, 1, 1, 1, 0, 0, 0])
        p = pydesign.SequentialRerandomization().block_assignment_probs(h)
        self.assertAlmostEqual(p.marginals[0, 0], 1 / 36)
        self.assertAlmostEqual(p.marginals[0, 1], 35 / 36)

    def test_srd_small_expansion(self):
        x_now = np.arange(4.0)[:, np.newaxis]
        h = pypop.HistoryView(np.empty((0, 1)), np.empty(0, dtype=int), np.empty(0), x_now, (), 2)
        design = pydesign.SequentialRerandomization(accept_count=1, treated_per_block=2)
        support, rows = design.accepted(h)
        self.assertEqual({tuple(a) for a in support[rows].tolist()}, {(1, 0, 0, 1), (0, 1, 1, 0)})
        self.assertTrue(np.allclose(design.block_assignment_probs(h).marginals, 0.5))

    def test_mahalanobis(self):
        self.assertEqual(pydesign.mahalanobis_imbalance([2.0], [0.0], [[4.0]]), 1.0)
        self.assertEqual(pydesign.mahalanobis_imbalance([1.0, -1.0], [1.0, -1.0], np.eye(2)), 0.0)

    def test_mahalanobis_rescaling(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((30, 3))
        a, b = x[:12].mean(axis=0), x[12:].mean(axis=0)
        S = np.cov(x, rowvar=False)
        d = pydesign.mahalanobis_imbalance(a, b, S)
        self.assertAlmostEqual(pydesign.mahalanobis_imbalance(10 * a, 10 * b, 100 * S), d, places=10)
        h = pypop.HistoryView(x[:24, :1], rng.integers(0, 2, 24), rng.standard_normal(24),
                              x[24:30, :1], (6, 6, 6, 6), 2)
        scaled = pypop.HistoryView(10 * h.x_past, h.z_past, h.y_past, 10 * h.x_now, h.past_sizes, 2)
        design = pydesign.SequentialRerandomization(accept_count=5, treated_per_block=3)
        self.assertTrue(np.array_equal(design.accepted(h)[1], design.accepted(scaled)[1]))

    def test_design_dict(self):
        data = {'kind': 'epsilon_greedy', 'warmup': 50,
                'explore': {'kind': 'power', 'delta': -0.2}, 'num_arms': 2}
        design = pydesign.design_from_dict(data)
        self.assertEqual(design.explore.value, -0.2)
        self.assertEqual(pydesign.design_to_dict(design), data)

    def test_unknown_design(self):
        with self.assertRaises(common.ConfigError):
            pydesign.design_from_dict({'kind': 'thompson'})

    def test_wrong_design_type(self):
        h = random_history(np.random.default_rng(0))
        with self.assertRaises(TypeError):
            pydesign.block_assignment_probs(pydesign.Bernoulli(), h)

    def test_sample_assignment(self):
        p = pydesign.AssignmentProbs([0.2, 0.3, 0.5])
        a = [pydesign.sample_assignment(p, np.random.default_rng(9)) for _ in range(2)]
        self.assertEqual(a[0], a[1])

    def test_sample_assignment_frequencies(self):
        rng = np.random.default_rng(10)
        p = pydesign.AssignmentProbs([0.3, 0.7])
        n = 100000
        counts = np.bincount([pydesign.sample_assignment(p, rng) for _ in range(n)], minlength=2)
        self.assertGreater(stats.chisquare(counts, n * p.probs).pvalue, 0.001)
        p = pydesign.AssignmentProbs([1 - 1e-9, 1e-9])
        self.assertTrue(all(pydesign.sample_assignment(p, rng) == 0 for _ in range(1000)))

    def test_run_design(self):
        pf = pypop.PopFrame.from_file(pop_file1)
        lf = pydesign.run_design(pf, pydesign.Bernoulli(), np.random.default_rng(0))
        self.assertTrue(np.all(lf.e == 0.5))
        self.assertTrue(np.array_equal(lf.y, pf.outcomes[np.arange(6), lf.z]))

    def test_run_block_design(self):
        pf = pypop.PopFrame.from_file(pop_file2)
        design = pydesign.SequentialRerandomization(accept_count=2, treated_per_block=2)
        lf = pydesign.run_design(pf, design, np.random.default_rng(0))
        self.assertEqual(np.bincount(lf.z[:4]).tolist(), [2, 2])
        self.assertTrue(lf.is_block)

class TestPymodel(unittest.TestCase):

    def setUp(self):
        pf = pypop.generate_population({'tag': 'linear', 'size': 40}, 11)
        self.lf = pydesign.run_design(pf, pydesign.Bernoulli(), np.random.default_rng(1))

    def test_running_mean(self):
        h = pypop.HistoryView(np.empty((2, 0)), np.array([0, 0]), np.array([2.0, 4.0]), np.empty(0), num_arms=2)
        m = pymodel.predict_adaptive(pymodel.RunningMean(), h, np.empty(0))
        self.assertEqual(m.tolist(), [3.0, 0.0])

    def test_unobserved_last_arm(self):
        lf = pypop.LogFrame(np.empty((4, 0)), [0, 1, 0, 1], np.full((4, 3), 1 / 3), [1.0, 2.0, 3.0, 4.0])
        m = pymodel.predict_adaptive(pymodel.RunningMean(), lf.history(4), np.empty(0))
        self.assertEqual(m.tolist(), [2.0, 2.0, 0.0])
        self.assertEqual(pymodel.adaptive_predictions(pymodel.RunningMean(), lf).shape, (4, 3))
        h = pypop.HistoryView(np.empty((2, 0)), np.array([0, 1]), np.array([1.0, 2.0]), np.empty(0))
        m = pymodel.predict_adaptive(pymodel.RunningMean(), h, np.empty(0), num_arms=3)
        self.assertEqual(m.tolist(), [1.0, 2.0, 0.0])
        with self.assertRaisesRegex(common.ConfigError, 'Number of arms is unknown'):
            pymodel.predict_adaptive(pymodel.RunningMean(), h, np.empty(0))

    def test_least_squares_permutation(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((50, 2))
        z = rng.integers(0, 2, 50)
        y = rng.standard_normal(50)
        x_now = rng.standard_normal(2)
        model = pymodel.OnlineLeastSquares()
        m = pymodel.predict_adaptive(model, pypop.HistoryView(x, z, y, x_now, num_arms=2), x_now)
        for _ in range(5):
            i = rng.permutation(50)
            h = pypop.HistoryView(x[i], z[i], y[i], x_now, num_arms=2)
            self.assertTrue(np.allclose(pymodel.predict_adaptive(model, h, x_now), m))

    def test_prefix_causality(self):
        for model in [pymodel.RunningMean(), pymodel.OnlineLeastSquares(), pymodel.KNearestNeighbors(k=3)]:
            m = pymodel.adaptive_predictions(model, self.lf)
            y = np.array(self.lf.y)
            y[25:] += 100
            mutated = pypop.LogFrame(self.lf.x, self.lf.z, self.lf.e, y)
            n = pymodel.adaptive_predictions(model, mutated)
            self.assertTrue(np.array_equal(m[:26], n[:26]))
            self.assertFalse(np.array_equal(m[26:], n[26:]))

    def test_least_squares(self):
        m = pymodel.adaptive_predictions(pymodel.OnlineLeastSquares(), self.lf)
        t = 35
        for z in range(2):
            rows = np.flatnonzero(self.lf.z[:t] == z)
            self.assertGreaterEqual(len(rows), 3)
            fit = sm.OLS(self.lf.y[rows], sm.add_constant(self.lf.x[rows])).fit()
            expected = fit.params @ np.r_[1.0, self.lf.x[t]]
            self.assertAlmostEqual(m[t, z], expected, places=8)

    def test_knn_all(self):
        a = pymodel.adaptive_predictions(pymodel.KNearestNeighbors(k=100), self.lf)
        b = pymodel.adaptive_predictions(pymodel.RunningMean(), self.lf)
        self.assertTrue(np.allclose(a, b))

    def test_predict_adaptive_matches_log(self):
        model = pymodel.KNearestNeighbors(k=5)
        m = pymodel.adaptive_predictions(model, self.lf)
        h = self.lf.history(21)
        self.assertTrue(np.allclose(pymodel.predict_adaptive(model, h, self.lf.x[20]), m[20]))

    def test_model_dict(self):
        self.assertEqual(pymodel.model_from_dict({'kind': 'knn', 'k': 5}), pymodel.KNearestNeighbors(k=5))
        with self.assertRaises(common.ConfigError):
            pymodel.model_from_dict('forest')

    def test_oracle(self):
        pf = pypop.PopFrame.from_file(pop_file1)
        lf = pydesign.run_design(pf, pydesign.Bernoulli(), np.random.default_rng(2))
        m = pymodel.adaptive_predictions(pymodel.Oracle(), lf)
        self.assertTrue(np.array_equal(m, pf.outcomes))

    def test_crossfit(self):
        res = pymodel.crossfit_estimate(self.lf, 2, C=C)
        self.assertEqual(res.fold_sizes.tolist(), [20, 20])
        self.assertAlmostEqual(res.estimate[0], res.weights @ res.fold_estimates[:, 0])

    def test_crossfit_noiseless(self):
        x = np.arange(12.0)
        z = np.arange(12) % 2
        y = np.where(z == 0, 1 + 2 * x, 3 - x)
        lf = pypop.LogFrame(x[:, np.newaxis], z, np.full((12, 2), 0.5), y)
        res = pymodel.crossfit_estimate(lf, 2, C=C)
        self.assertAlmostEqual(res.estimate[0], -14.5, places=8)
        self.assertTrue(np.allclose(res.fold_covariances, 0, atol=1e-12))

    def test_crossfit_errors(self):
        with self.assertRaises(ValueError):
            pymodel.crossfit_estimate(self.lf, 1)
        lf = pypop.LogFrame(np.zeros((4, 1)), [0, 0, 1, 1], np.full((4, 2), 0.5), np.arange(4.0))
        with self.assertRaisesRegex(ValueError, 'empty fold-arm cell'):
            pymodel.crossfit_estimate(lf, 2)

    def test_all_units_warning(self):
        lf = pypop.LogFrame(np.zeros((3, 1)), [0, 0, 0], np.full((3, 2), 0.5), [1.0, 2.0, 3.0])
        with self.assertWarns(UserWarning):
            m = pymodel.predict_all_units(lf, pymodel.RunningMean())
        self.assertTrue(np.all(m[:, 1] == 0))

class TestPyest(unittest.TestCase):

    def test_pseudo_outcomes(self):
        lf = pypop.LogFrame([[0.0]], [0], [[0.5, 0.5]], [2.0], [[1.0, 3.0]])
        trace = pyest.pseudo_outcomes(lf)
        self.assertEqual(trace.unit_ipw.tolist(), [[4.0, 0.0]])
        self.assertEqual(trace.unit_aipw.tolist(), [[3.0, 3.0]])

    def test_point_estimates(self):
        lf = pypop.LogFrame.from_file(log_file1)
        trace = pyest.pseudo_outcomes(lf)
        self.assertAlmostEqual(pyest.point_estimate(trace, C, 'ipw')[0], 25 / 18)
        self.assertAlmostEqual(pyest.point_estimate(trace, C, 'aipw')[0], 65.5 / 36)

    def test_zero_model_equals_ipw(self):
        lf = pypop.LogFrame.from_file(log_file1)
        lf = lf.with_predictions(np.zeros((6, 2)))
        trace = pyest.pseudo_outcomes(lf)
        self.assertTrue(np.array_equal(pyest.point_estimate(trace, C, 'ipw'), pyest.point_estimate(trace, C, 'aipw')))
        a = pyest.covariance_estimate(trace, 'vhat_ipw').matrix
        b = pyest.covariance_estimate(trace, 'vhat_aipw').matrix
        self.assertTrue(np.array_equal(a, b))

    def test_bt_weights(self):
        self.assertTrue(np.all(pyest.bt_weights([2, 2, 2, 2]) == 1 / 3))
        with self.assertRaisesRegex(ValueError, 'below one half'):
            pyest.bt_weights([5, 2, 3])

    def test_equal_blocks_bitwise(self):
        pf = pypop.PopFrame.from_file(pop_file2)
        design = pydesign.SequentialRerandomization(accept_count=2, treated_per_block=2)
        lf = pydesign.run_design(pf, design, np.random.default_rng(3))
        lf = lf.with_predictions(pymodel.adaptive_predictions(pymodel.RunningMean(), lf))
        trace = pyest.pseudo_outcomes(lf)
        for kind in ['vhat_aipw', 'vtilde_aipw']:
            a = pyest.covariance_estimate(trace, kind).matrix
            b = pyest.covariance_estimate(trace, kind + '_b').matrix
            self.assertTrue(np.array_equal(a, b))

    def test_symmetric_psd(self):
        pf = pypop.generate_population({'tag': 'rerandomization', 'num_blocks': 6, 'block_size': 8}, 4)
        lf = pydesign.run_design(pf, pydesign.SequentialRerandomization(), np.random.default_rng(5))
        lf = lf.with_predictions(pymodel.adaptive_predictions(pymodel.OnlineLeastSquares(), lf))
        trace = pyest.pseudo_outcomes(lf)
        for kind in pyest.COVARIANCE_KINDS:
            V = pyest.covariance_estimate(trace, kind).matrix
            self.assertTrue(np.array_equal(V, V.T))
            self.assertGreaterEqual(np.linalg.eigvalsh(V)[0], -1e-10 * max(1, np.abs(V).max()))

    def test_all_units_noiseless(self):
        x = np.arange(12.0)
        z = np.arange(12) % 2
        y = np.where(z == 0, 1 + 2 * x, 3 - x)
        lf = pypop.LogFrame(x[:, np.newaxis], z, np.full((12, 2), 0.5), y)
        tau, cov = pyest.all_units_estimate(lf, pymodel.OnlineLeastSquares(), C)
        self.assertAlmostEqual(tau[0], -14.5, places=8)
        self.assertLess(abs(cov[0, 0]), 1e-12)

    def test_vtilde_sharper(self):
        pf = pypop.generate_population({'tag': 'linear', 'size': 200}, 13)
        rng = np.random.default_rng(14)
        sharper = 0
        for _ in range(200):
            lf = pydesign.run_design(pf, pydesign.Bernoulli(), rng)
            lf = lf.with_predictions(pymodel.adaptive_predictions(pymodel.OnlineLeastSquares(), lf))
            trace = pyest.pseudo_outcomes(lf)
            vhat = pyest.covariance_estimate(trace, 'vhat_aipw').matrix
            vtilde = pyest.covariance_estimate(trace, 'vtilde_aipw').matrix
            sharper += np.trace(C @ vtilde @ C.T) <= np.trace(C @ vhat @ C.T)
        self.assertGreaterEqual(sharper, 190)

    def test_wald_set(self):
        s = pyest.wald_set([1.0], [[0.25]], 0.05)
        self.assertAlmostEqual(s.length, 2 * np.sqrt(common.chi2_quantile(0.95, 1) * 0.25))
        self.assertTrue(s.contains([1.5]))
        self.assertFalse(s.contains([2.5]))
        with self.assertRaises(common.DegeneracyError):
            pyest.wald_set([0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]], 0.05)

    def test_affine_equivariance(self):
        lf = pypop.LogFrame.from_file(log_file1)
        A = np.array([[2.0, 1.0], [0.0, 1.0]])
        tau = np.array([0.5, 2.0])
        a = pyest.infer(lf, np.eye(2), kinds=['vhat_aipw'])
        b = pyest.infer(lf, A, kinds=['vhat_aipw'])
        self.assertAlmostEqual(a.sets['vhat_aipw'].statistic(tau), b.sets['vhat_aipw'].statistic(A @ tau))

    def test_degenerate(self):
        lf = pypop.LogFrame.from_file(log_degenerate)
        with self.assertRaisesRegex(common.DegeneracyError, 'singular projected covariance'):
            pyest.infer(lf, C, estimator='ipw')

    def test_report(self):
        lf = pypop.LogFrame.from_file(log_file1)
        report = pyest.infer(lf, C).to_dict()
        self.assertEqual(sorted(report['cov']), ['vhat_aipw', 'vtilde_aipw'])
        self.assertLess(report['ci_lower']['vhat_aipw'][0], report['tau_hat'][0])

    def test_diagnostics_warning(self):
        lf = pypop.LogFrame.from_file(log_file1)
        with self.assertWarns(UserWarning):
            d = pyest.diagnostics(lf, lindeberg_threshold=0.0)
        self.assertEqual(d.flags, ['lindeberg_proxy'])
        self.assertEqual(d.realized_min_prob, 0.25)

class TestPyoracle(unittest.TestCase):

    def test_enumerate(self):
        pf = pypop.PopFrame([[1, 2], [3, 5], [0, 1]])
        result = pyoracle.enumerate_paths(pf, pydesign.Bernoulli())
        self.assertEqual(result.num_paths, 8)
        self.assertAlmostEqual(result.total_probability(), 1.0)

    def test_certify_all(self):
        for r in pyoracle.certify_all():
            self.assertTrue(r.passed, f'{r.tag} on {r.instance}: {r.deviation}')

    def test_ipw_exact(self):
        instance = pyoracle.default_instances()['greedy3']
        r = pyoracle.certify_identity('ipw-covariance', instance)
        self.assertLessEqual(r.deviation, 1e-9)

    def test_unknown_tag(self):
        instance = pyoracle.default_instances()['greedy3']
        with self.assertRaises(ValueError):
            pyoracle.certify_identity('unbiased', instance)

    def test_oracle_model_collapse(self):
        instance = pyoracle.default_instances()['greedy3']
        result = pyoracle.enumerate_paths(instance.population, instance.design, pymodel.Oracle())
        self.assertTrue(np.allclose(result.covariance('aipw'), 0, atol=1e-12))

    def test_condition_quantities(self):
        instance = pyoracle.default_instances()['greedy3']
        df = pyoracle.exact_condition_quantities(instance.population, instance.design)
        self.assertEqual(list(df.columns), ['unit', 'min_prob', 'v', 'omega', 'L', 'M'])
        self.assertEqual(df['min_prob'].iloc[0], 0.5)
        self.assertEqual(df['min_prob'].iloc[2], 0.25)

    def test_path_cap(self):
        pf = pypop.generate_population({'tag': 'trend', 'size': 21}, 0)
        with self.assertRaises(ValueError):
            pyoracle.enumerate_paths(pf, pydesign.Bernoulli())

    def test_monte_carlo_variance(self):
        pf = pypop.generate_population({'tag': 'linear', 'size': 10}, 6)
        design = pydesign.Bernoulli()
        exact = (C @ pyoracle.enumerate_paths(pf, design).covariance('ipw') @ C.T)[0, 0]
        rng = np.random.default_rng(0)
        taus = []
        for _ in range(4000):
            lf = pydesign.run_design(pf, design, rng)
            taus.append(pyest.point_estimate(pyest.pseudo_outcomes(lf), C, 'ipw')[0])
        d = np.array(taus) - np.mean(taus)
        var = np.mean(d ** 2)
        se = np.sqrt((np.mean(d ** 4) - var ** 2) / len(d))
        self.assertLess(abs(var - exact), 5 * se)

class TestPystudy(unittest.TestCase):

    def test_labels(self):
        s = pystudy.Strategy.from_dict({'kind': 'aipw', 'model': 'knn', 'variance': 'vtilde'})
        self.assertEqual(s.label, 'aipw2:knn')
        self.assertEqual(pystudy.Strategy('cf', bonferroni=True).label, 'cf1:least_squares')

    def test_spec_errors(self):
        with self.assertRaises(common.ConfigError):
            small_spec(replications=0)
        with self.assertRaises(common.ConfigError):
            pystudy.StudySpec.from_dict({'population': {}, 'design': {'kind': 'bernoulli'}})
        with self.assertRaises(common.ConfigError):
            small_spec(strategies=['ipw', 'ipw'])
        with self.assertRaises(common.ConfigError):
            small_spec(seed=1)
        with self.assertRaises(common.ConfigError):
            small_spec(contrast=[[1, 0], [0, 1]], strategies=[{'kind': 'cf', 'bonferroni': True}])

    def test_run_study(self):
        result = pystudy.run_study(small_spec())
        self.assertEqual(len(result.summary), 7 * 6)
        self.assertEqual(len(result.deviations), 7 * 12)
        for r, df in result.rows.groupby('replication'):
            self.assertEqual(df['z_hash'].nunique(), 1)
        for label in result.rows['strategy'].unique():
            mse = result.metric(label, 'mse')
            bias = result.metric(label, 'bias')
            self.assertGreaterEqual(mse, bias ** 2 * (1 - 1e-9))
            self.assertTrue(0 <= result.metric(label, 'coverage') <= 1)

    def test_oracle_strategy(self):
        spec = small_spec(strategies=[{'kind': 'aipw', 'model': 'oracle'}])
        result = pystudy.run_study(spec)
        self.assertLess(result.metric('aipw1:oracle', 'mse'), 1e-20)
        self.assertEqual(result.metric('aipw1:oracle', 'coverage'), 1.0)

    def test_parallelism(self):
        a = pystudy.run_study(small_spec(replications=6))
        b = pystudy.run_study(small_spec(replications=6, parallelism=2))
        pd.testing.assert_frame_equal(a.rows, b.rows)
        pd.testing.assert_frame_equal(a.summary, b.summary)

    def test_multirow_contrast(self):
        spec = small_spec(strategies=['ipw', 'sm'], contrast=[[1, 0], [0, 1]])
        result = pystudy.run_study(spec)
        self.assertIn('deviation_2', result.rows.columns)
        self.assertIn('bias_2', result.summary['metric'].tolist())

    def test_srd_comparison(self):
        spec = pystudy.StudySpec.from_dict({
            'population': {'tag': 'rerandomization', 'num_blocks': 10, 'block_size': 8, 'seed': 1},
            'design': {'kind': 'rerandomization'},
            'strategies': ['ipw', {'kind': 'aipw', 'model': 'running_mean', 'variance': 'vhat_b'}],
            'contrast': [[-1, 1]],
            'replications': 10,
        })
        result = pystudy.run_srd_comparison(spec)
        self.assertEqual(len(result.comparison), 16)
        self.assertEqual(len(result.deviations), 40)
        self.assertTrue(np.isfinite(result.reduction('aipw1_b:running_mean', 'rmse')))
        self.assertTrue(np.isfinite(result.reduction('ipw', 'rmse')))

    def test_outputs(self):
        result = pystudy.run_study(small_spec(strategies=['ipw', 'sm'], replications=5))
        with tempfile.TemporaryDirectory() as t:
            pystudy.summarize_to_csv(result, f'{t}/summary.csv')
            pystudy.emit_plot_data(result, f'{t}/deviations.csv')
            pystudy.write_report(result, f'{t}/report.json')
            summary = pd.read_csv(f'{t}/summary.csv')
            deviations = pd.read_csv(f'{t}/deviations.csv')
            with open(f'{t}/report.json') as f:
                report = json.load(f)
        self.assertEqual(list(summary.columns), ['strategy', 'metric', 'value'])
        self.assertEqual(len(summary), 2 * 6)
        self.assertEqual(list(deviations.columns), ['strategy', 'replication', 'deviation'])
        self.assertEqual(len(deviations), 2 * 5)
        self.assertIn('ipw', report['summary'])

    def test_quick(self):
        spec = pystudy.StudySpec.from_file(f'{config_dir}/table1.json').quick()
        self.assertEqual(spec.population['size'], 500)
        self.assertEqual(spec.replications, 300)
        spec = pystudy.StudySpec.from_file(f'{config_dir}/srd.json').quick()
        self.assertEqual(spec.population['num_blocks'], 60)

    def test_adjustment_reduces_error(self):
        spec = pystudy.StudySpec.from_file(f'{config_dir}/table1.json').quick()
        spec = spec.replace(strategies=spec.strategies[:5], replications=100)
        result = pystudy.run_study(spec)
        self.assertLess(result.metric('aipw1:least_squares', 'mse'), result.metric('ipw', 'mse'))
        self.assertLess(result.metric('aipw2:least_squares', 'length'), result.metric('aipw1:least_squares', 'length'))
        self.assertLess(result.metric('aipw1:least_squares', 'length'), result.metric('ipw', 'length'))
        self.assertLess(result.metric('all:least_squares', 'length'), result.metric('aipw1:least_squares', 'length'))

    @unittest.skipUnless(FULL_SCALE, 'set DBADAPT_FULL_SCALE=1')
    def test_table1(self):
        spec = pystudy.StudySpec.from_file(f'{config_dir}/table1_shared.json')
        result = pystudy.run_study(spec.replace(parallelism=os.cpu_count()))
        m = result.metric
        self.assertAlmostEqual(m('ipw', 'coverage'), 0.963, delta=0.02)
        self.assertGreaterEqual(m('aipw1:least_squares', 'coverage'), 0.98)
        self.assertAlmostEqual(m('aipw2:least_squares', 'coverage'), 0.945, delta=0.02)
        self.assertAlmostEqual(m('all:least_squares', 'coverage'), 0.946, delta=0.02)
        self.assertAlmostEqual(m('cf2:least_squares', 'coverage'), 0.948, delta=0.02)
        self.assertAlmostEqual(m('ipw', 'length'), 0.607, delta=0.05)
        self.assertAlmostEqual(m('aipw1:least_squares', 'length'), 0.254, delta=0.03)
        self.assertAlmostEqual(m('aipw2:least_squares', 'length'), 0.185, delta=0.02)
        self.assertAlmostEqual(m('all:least_squares', 'length'), 0.175, delta=0.02)
        self.assertAlmostEqual(m('cf2:least_squares', 'length'), 0.175, delta=0.02)
        self.assertAlmostEqual(m('ipw', 'mse'), 0.023, delta=0.005)
        self.assertAlmostEqual(m('aipw1:least_squares', 'mse'), 0.002, delta=0.001)
        self.assertLessEqual(m('all:knn', 'coverage'), 0.90)
        self.assertGreaterEqual(m('aipw2:knn', 'coverage'), 0.93)

    @unittest.skipUnless(FULL_SCALE, 'set DBADAPT_FULL_SCALE=1')
    def test_table1_independent_noise(self):
        # With e1 and e2 independent the design variance of the adjusted
        # estimators is about 2/T while the residual covariance targets 4/T.
        spec = pystudy.StudySpec.from_file(f'{config_dir}/table1.json')
        result = pystudy.run_study(spec.replace(parallelism=os.cpu_count()))
        m = result.metric
        self.assertAlmostEqual(m('ipw', 'coverage'), 0.964, delta=0.02)
        self.assertGreaterEqual(m('aipw2:least_squares', 'coverage'), 0.98)
        self.assertGreaterEqual(m('all:least_squares', 'coverage'), 0.98)
        self.assertAlmostEqual(m('all:least_squares', 'length'), 0.175, delta=0.02)
        self.assertLess(m('aipw1:least_squares', 'mse'), 0.0015)

    @unittest.skipUnless(FULL_SCALE, 'set DBADAPT_FULL_SCALE=1')
    def test_srd(self):
        spec = pystudy.StudySpec.from_file(f'{config_dir}/srd.json')
        result = pystudy.run_srd_comparison(spec.replace(parallelism=os.cpu_count()))
        for strategy in spec.strategies:
            self.assertTrue(55 <= result.reduction(strategy.label, 'rmse') <= 85)
        label = spec.strategies[1].label
        self.assertTrue(55 <= result.reduction(label, 'length') <= 85)
        self.assertTrue(0.925 <= result.design.metric(label, 'coverage') <= 0.975)

    @unittest.skipUnless(FULL_SCALE, 'set DBADAPT_FULL_SCALE=1')
    def test_vanishing(self):
        coverage, skewness = [], []
        for name in ['02', '0', 'm02', 'm04']:
            spec = pystudy.StudySpec.from_file(f'{config_dir}/vanishing_{name}.json')
            result = pystudy.run_study(spec.replace(parallelism=os.cpu_count()))
            coverage.append(result.metric('ipw', 'coverage'))
            skewness.append(result.metric('ipw', 'skewness'))
        self.assertTrue(all(a >= b for a, b in zip(coverage, coverage[1:])))
        self.assertGreaterEqual(coverage[0], 0.93)
        self.assertLessEqual(coverage[-1], 0.85)
        self.assertLess(skewness[-1], skewness[0])

class TestCli(unittest.TestCase):

    def test_certify(self):
        with tempfile.TemporaryDirectory() as t:
            subprocess.run(['dbadapt', 'certify', '--out', f'{t}/report.json'], capture_output=True, text=True, check=True)
            with open(f'{t}/report.json') as f:
                report = json.load(f)
        self.assertTrue(report['passed'])
        self.assertTrue(all(c['deviation'] <= 1e-9 for c in report['checks'] if c['tag'] not in ('dispersion-iff', 'bt-sharp')))

    def test_simulate_missing_config(self):
        result = subprocess.run(['dbadapt', 'simulate', 'missing.json'], capture_output=True, text=True)
        self.assertEqual(result.returncode, 2)
        self.assertIn('missing.json', result.stderr)

    def test_simulate(self):
        with tempfile.TemporaryDirectory() as t:
            config = small_spec(strategies=['ipw', 'sm'], replications=4).to_dict()
            with open(f'{t}/study.json', 'w') as f:
                json.dump(config, f)
            subprocess.run(['dbadapt', 'simulate', f'{t}/study.json', '--out', f'{t}/out', '--replications', '3'], capture_output=True, text=True, check=True)
            deviations = pd.read_csv(f'{t}/out/deviations.csv')
            self.assertTrue(os.path.exists(f'{t}/out/summary.csv'))
            self.assertTrue(os.path.exists(f'{t}/out/report.json'))
        self.assertEqual(len(deviations), 2 * 3)

    def test_analyze(self):
        with tempfile.TemporaryDirectory() as t:
            subprocess.run(['dbadapt', 'analyze', analyze_file1, '--out', f'{t}/report.json'], capture_output=True, text=True, check=True)
            with open(f'{t}/report.json') as f:
                report = json.load(f)
        self.assertAlmostEqual(report['tau_hat'][0], 65.5 / 36)
        self.assertAlmostEqual(report['chi2_threshold'], 3.841458821, places=8)

    def test_analyze_degenerate(self):
        with tempfile.TemporaryDirectory() as t:
            result = subprocess.run(['dbadapt', 'analyze', analyze_degenerate, '--out', f'{t}/report.json'], capture_output=True, text=True)
        self.assertEqual(result.returncode, 3)
        self.assertIn('singular projected covariance', result.stderr)

    def test_gen_population(self):
        result = subprocess.run(['dbadapt', 'gen-population', '--dgp', 'trend', '--size', '5', '--seed', '1'], capture_output=True, text=True, check=True)
        lines = result.stdout.splitlines()
        self.assertEqual(lines[0], 'unit,y1,y2')
        self.assertEqual(len(lines), 6)

    def test_gen_population_shared(self):
        result = subprocess.run(['dbadapt', 'gen-population', '--dgp', 'linear', '--size', '5', '--seed', '1', '--noise', 'shared'], capture_output=True, text=True, check=True)
        df = pd.read_csv(io.StringIO(result.stdout))
        self.assertEqual(df['unit'].tolist(), [1, 2, 3, 4, 5])
        self.assertTrue(np.allclose(df['y2'] - df['y1'], 2 * df['x1']))

    def test_gen_population_missing_size(self):
        result = subprocess.run(['dbadapt', 'gen-population', '--dgp', 'linear'], capture_output=True, text=True)
        self.assertEqual(result.returncode, 2)

if __name__ == '__main__':
    unittest.main()
