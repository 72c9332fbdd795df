"""Tests for the evaluation module."""

import os
import sys
import unittest
from unittest.mock import patch

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

# Add the parent directory to the path so we can import the package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from ikdr import evaluation
from ikdr.config import Hyperparams
from ikdr.data import Dataset, build_label_indicator
from ikdr.embedders import registry
from ikdr.errors import InputError, NumericalError, ZeroColumnError
from ikdr.kernels import gaussian_bandwidth


def separated_blobs(seed=0, per_class=12):
    rng = np.random.default_rng(seed)
    features = np.vstack([rng.normal(scale=0.3, size=(per_class, 2)),
                          np.array([10.0, 10.0]) + rng.normal(scale=0.3, size=(per_class, 2))])
    return Dataset(features=features, labels=[0] * per_class + [1] * per_class, class_count=2)


def four_blobs(seed=0, per_blob=50, spread=0.4):
    """Four Gaussian blobs in 2-D; each class owns two opposite corners."""
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [4.0, 4.0], [0.0, 4.0], [4.0, 0.0]])
    features = np.vstack([center + spread * rng.normal(size=(per_blob, 2)) for center in centers])
    return Dataset(features=features, labels=[0] * (2 * per_blob) + [1] * (2 * per_blob), class_count=2)


FAST = Hyperparams(lam=0.01, mu=1.0, k=2, max_outer=5, admm_iters=40)


class TestKnnPredict(unittest.TestCase):
    """Test 1-NN classification."""

    def test_exact_match(self):
        """A test point equal to a training point takes its label."""
        train = np.array([[0.0, 1.0, 5.0]])
        predicted = evaluation.knn_predict(train, [3, 4, 5], np.array([[5.0]]))
        assert_array_equal(predicted, [5])

    def test_tie_goes_to_lower_index(self):
        """Equidistant neighbors resolve to the smallest training index."""
        train = np.array([[1.0, -1.0]])
        assert_array_equal(evaluation.knn_predict(train, [1, 0], np.array([[0.0]])), [1])

    def test_matches_brute_force(self):
        """Agrees with an exhaustive double loop."""
        rng = np.random.default_rng(0)
        train = rng.normal(size=(3, 30))
        labels = rng.integers(0, 2, size=30)
        test = rng.normal(size=(3, 20))
        expected = []
        for j in range(20):
            distances = [np.sum((train[:, i] - test[:, j]) ** 2) for i in range(30)]
            expected.append(labels[int(np.argmin(distances))])
        assert_array_equal(evaluation.knn_predict(train, labels, test), expected)


class TestInterpretability(unittest.TestCase):
    """Test Ip and class scores."""

    def setUp(self):
        self.H = build_label_indicator([0, 0, 1, 1, 2, 2], 3)

    def test_single_class_columns(self):
        """Columns supported on one class give Ip = 1."""
        A = np.zeros((6, 3))
        A[0, 0], A[1, 0] = 0.5, 0.5
        A[2, 1] = 1.0
        A[5, 2] = 1.0
        self.assertAlmostEqual(evaluation.ip_measure(A, self.H), 1.0)
        assert_allclose(evaluation.dimension_class_scores(A, self.H), np.eye(3))

    def test_uniform_columns(self):
        """Uniform weights over balanced classes give Ip = 1/C."""
        A = np.full((6, 2), 1.0 / 6.0)
        self.assertAlmostEqual(evaluation.ip_measure(A, self.H), 1.0 / 3.0)
        assert_allclose(evaluation.dimension_class_scores(A, self.H), np.full((3, 2), 1.0 / 3.0))

    def test_random_matches_direct_evaluation(self):
        """Agrees with a per-column loop and stays in [1/C, 1]."""
        rng = np.random.default_rng(1)
        labels = rng.integers(0, 3, size=30)
        labels[:3] = [0, 1, 2]
        H = build_label_indicator(labels, 3)
        for _ in range(10):
            A = rng.uniform(size=(30, 4))
            direct = np.mean([max(A[labels == q, i].sum() for q in range(3)) / A[:, i].sum() for i in range(4)])
            value = evaluation.ip_measure(A, H)
            self.assertAlmostEqual(value, direct, places=12)
            self.assertTrue(1.0 / 3.0 - 1e-12 <= value <= 1.0 + 1e-12)
            scores = evaluation.dimension_class_scores(A, H)
            assert_allclose(scores.sum(axis=0), 1.0, atol=1e-9)
            self.assertAlmostEqual(scores.max(axis=0).mean(), value, places=12)

    def test_zero_column(self):
        """A column without mass cannot be normalized."""
        A = np.ones((6, 2))
        A[:, 1] = 0.0
        with self.assertRaises(ZeroColumnError):
            evaluation.ip_measure(A, self.H)

    def test_negative_entries(self):
        """Negative coefficients are rejected."""
        A = np.ones((6, 2))
        A[0, 0] = -0.5
        with self.assertRaises(InputError):
            evaluation.dimension_class_scores(A, self.H)


class TestFeatureProfile(unittest.TestCase):
    """Test kernel-weight profiles."""

    def test_one_hot(self):
        """A single selected kernel gives l0 = 1 and ranks first."""
        profile = evaluation.feature_selection_profile([0.0, 1.0, 0.0], ["a", "b", "c"])
        self.assertEqual(profile.l0, 1)
        self.assertEqual(profile.entries[0], (1, "b", 1.0))

    def test_uniform(self):
        """Uniform weights count every feature; ties keep feature order."""
        profile = evaluation.feature_selection_profile(np.full(4, 0.25), ["a", "b", "c", "d"])
        self.assertEqual(profile.l0, 4)
        self.assertEqual([name for _, name, _ in profile.entries], ["a", "b", "c", "d"])

    def test_threshold(self):
        """Weights at or below 1e-6 do not count."""
        profile = evaluation.feature_selection_profile([0.6, 0.4 - 1e-7, 1e-7], ["a", "b", "c"])
        self.assertEqual(profile.l0, 2)
        self.assertEqual(profile.to_dict()["features"][2]["name"], "c")

    def test_unselected_features_ranked_by_gradient(self):
        """Zero weights are ordered by the QP gradient, smallest first."""
        profile = evaluation.feature_selection_profile([0.0, 0.0, 1.0, 0.0], ["a", "b", "c", "d"],
                                                       gradient=[3.0, 1.0, 0.5, 2.0])
        self.assertEqual([name for _, name, _ in profile.entries], ["c", "b", "d", "a"])
        self.assertEqual(profile.l0, 1)

    def test_gradient_does_not_reorder_selected_features(self):
        """Positive weights keep their order whatever the gradient says."""
        profile = evaluation.feature_selection_profile([0.3, 0.7, 1e-9], ["a", "b", "c"],
                                                       gradient=[5.0, 9.0, -1.0])
        self.assertEqual([name for _, name, _ in profile.entries], ["b", "a", "c"])

    def test_gradient_length_mismatch(self):
        """One gradient entry per weight is required."""
        with self.assertRaises(InputError):
            evaluation.feature_selection_profile([0.5, 0.5], ["a", "b"], gradient=[1.0])

    def test_name_count_mismatch(self):
        """One name per weight is required."""
        with self.assertRaises(InputError):
            evaluation.feature_selection_profile([0.5, 0.5], ["a"])


class TestCrossValidate(unittest.TestCase):
    """Test the cross-validation harness."""

    def setUp(self):
        self.dataset = separated_blobs()

    def test_separated_blobs_classified_perfectly(self):
        """Well separated classes reach accuracy 1 with a single grid entry."""
        report = evaluation.cross_validate(self.dataset, [FAST], fold_count=4, seed=0)
        self.assertEqual(report.accuracy_mean, 1.0)
        self.assertEqual(len(report.accuracy_per_fold), 4)
        self.assertAlmostEqual(report.accuracy_mean, np.mean(report.accuracy_per_fold))
        self.assertEqual(report.dimension_class_scores.shape, (2, 2))
        assert_allclose(report.dimension_class_scores.sum(axis=0), 1.0, atol=1e-9)
        self.assertTrue(0.5 <= report.ip_value <= 1.0)
        self.assertIsNone(report.feature_profile)

    def test_bandwidths_come_from_training_rows(self):
        """Test-fold rows never enter the kernel bandwidth."""
        report = evaluation.cross_validate(self.dataset, [FAST], fold_count=4, seed=0)
        for (train, _), bandwidths in zip(report.fold_plan.folds, report.fold_bandwidths):
            expected = gaussian_bandwidth(self.dataset.features[train], "mean")
            self.assertAlmostEqual(bandwidths[0], expected, places=12)

    def test_threads_do_not_change_results(self):
        """Parallel folds give the same report as sequential ones."""
        sequential = evaluation.cross_validate(self.dataset, [FAST], fold_count=3, seed=2)
        parallel = evaluation.cross_validate(self.dataset, [FAST], fold_count=3, seed=2, threads=3)
        self.assertEqual(sequential.accuracy_per_fold, parallel.accuracy_per_fold)
        self.assertEqual(sequential.ip_value, parallel.ip_value)

    def test_tuning_selects_from_grid(self):
        """With two candidates each fold records its pick."""
        grid = [FAST, FAST.with_updates(lam=0.001, mu=0.1)]
        report = evaluation.cross_validate(self.dataset, grid, fold_count=3, seed=0, inner_folds=2)
        self.assertEqual(len(report.selected), 3)
        for pick in report.selected:
            self.assertIn((pick["lambda"], pick["mu"]), [(0.01, 1.0), (0.001, 0.1)])

    def test_kpca_method(self):
        """The baseline runs through the same harness."""
        report = evaluation.cross_validate(self.dataset, [FAST], fold_count=3, seed=0, method="kpca")
        self.assertEqual(report.method, "kpca")
        self.assertEqual(report.accuracy_mean, 1.0)

    def test_empty_grid(self):
        """The grid must not be empty."""
        with self.assertRaises(InputError):
            evaluation.cross_validate(self.dataset, [], fold_count=3, seed=0)

    def test_fold_errors_carry_index(self):
        """A failing fold names itself in the error."""
        with patch("ikdr.evaluation._score", side_effect=NumericalError("boom")):
            with self.assertRaises(NumericalError) as ctx:
                evaluation.cross_validate(self.dataset, [FAST], fold_count=3, seed=0)
        self.assertIn("fold 0", str(ctx.exception))

    def test_refit_falls_back_to_next_grid_entry(self):
        """When the tuned candidate fails on the full training split, the next one is used."""
        grid = [FAST, FAST.with_updates(lam=0.5)]

        def score(embedder, train, test):
            if embedder.hyper.lam == FAST.lam and train.n_samples == 16:
                raise NumericalError("diverged")
            return 0.75

        with patch("ikdr.evaluation._score", side_effect=score):
            report = evaluation.cross_validate(self.dataset, grid, fold_count=3, seed=0, inner_folds=2)
        self.assertEqual(report.accuracy_per_fold, [0.75, 0.75, 0.75])
        self.assertEqual(report.selected, [{"lambda": 0.5, "mu": 1.0}] * 3)

    def test_class_missing_from_a_training_split(self):
        """A one-sample class leaves some training splits without it; CV still runs."""
        rng = np.random.default_rng(4)
        features = np.vstack([rng.normal(scale=0.3, size=(10, 2)),
                              np.array([5.0, 5.0]) + rng.normal(scale=0.3, size=(10, 2)),
                              [[10.0, 0.0]]])
        dataset = Dataset(features=features, labels=[0] * 10 + [1] * 10 + [2], class_count=3)
        grid = [FAST, FAST.with_updates(lam=0.1)]
        report = evaluation.cross_validate(dataset, grid, fold_count=10, seed=0, inner_folds=2)
        self.assertEqual(report.fold_plan.fold_count, 2)
        self.assertEqual(len(report.accuracy_per_fold), 2)
        self.assertIn("fold count reduced from 10 to 2", report.notes)
        self.assertEqual(report.dimension_class_scores.shape, (3, 2))

    def test_report_serializes(self):
        """to_dict carries the documented fields."""
        report = evaluation.cross_validate(self.dataset, [FAST], fold_count=3, seed=0, config_echo={"k": 2})
        document = report.to_dict()
        for key in ("accuracy_mean", "accuracy_per_fold", "ip_value", "dimension_class_scores",
                    "feature_profile", "config_echo", "notes"):
            self.assertIn(key, document)
        self.assertEqual(document["config_echo"], {"k": 2})


class TestTune(unittest.TestCase):
    """Test inner grid search."""

    def setUp(self):
        self.dataset = separated_blobs()
        self.grid = [FAST.with_updates(lam=1.0), FAST.with_updates(lam=0.5)]

    def test_failing_candidate_scores_zero(self):
        """A candidate whose fit fails is skipped, not fatal."""
        def score(embedder, train, test):
            if embedder.hyper.lam == 1.0:
                raise NumericalError("diverged")
            return 0.75

        with patch("ikdr.evaluation._score", side_effect=score):
            best, scores = evaluation.tune(self.dataset, self.grid, inner_folds=3, seed=0)
        self.assertEqual(best, 1)
        self.assertEqual(scores, [0.0, 0.75])

    def test_all_candidates_failing(self):
        """If nothing fits the error propagates."""
        with patch("ikdr.evaluation._score", side_effect=NumericalError("diverged")):
            with self.assertRaises(NumericalError):
                evaluation.tune(self.dataset, self.grid, inner_folds=3, seed=0)


class TestSweepAndComparison(unittest.TestCase):
    """Test accuracy-vs-k sweeps and the K-PCA comparison."""

    def setUp(self):
        self.dataset = separated_blobs(per_class=9)

    def test_sweep_rows(self):
        """One (k, accuracy) row per requested dimension."""
        rows = evaluation.accuracy_sweep(self.dataset, [1, 2], FAST, fold_count=3, seed=0)
        self.assertEqual([k for k, _ in rows], [1, 2])
        for _, accuracy in rows:
            self.assertTrue(0.0 <= accuracy <= 1.0)

    def test_comparison_uses_both_methods(self):
        """Both reports come back, on identical folds."""
        reports = evaluation.compare_with_kpca(self.dataset, [FAST], fold_count=3, seed=0)
        self.assertEqual(set(reports), {"ikdr", "kpca"})
        for (train_a, test_a), (train_b, test_b) in zip(reports["ikdr"].fold_plan.folds,
                                                        reports["kpca"].fold_plan.folds):
            assert_array_equal(test_a, test_b)


class TestSyntheticBenchmarks(unittest.TestCase):
    """End-to-end accuracy, interpretability and feature selection on synthetic data."""

    @classmethod
    def setUpClass(cls):
        cls.dataset = four_blobs()
        cls.reports = evaluation.compare_with_kpca(cls.dataset, [Hyperparams(k=2)], fold_count=10, seed=0)

    def test_four_blobs_ten_fold_accuracy(self):
        """Classes made of two opposite blobs each are separated by a 2-D embedding."""
        report = self.reports["ikdr"]
        self.assertEqual(len(report.accuracy_per_fold), 10)
        self.assertGreaterEqual(report.accuracy_mean, 0.95)

    def test_ip_beats_uncentered_kpca(self):
        """Every I-KDR dimension is dominated by one class, unlike K-PCA directions."""
        ikdr_ip = self.reports["ikdr"].ip_value
        kpca_ip = self.reports["kpca"].ip_value
        self.assertGreaterEqual(ikdr_ip, 0.90)
        self.assertGreater(ikdr_ip, kpca_ip)

    def test_informative_features_rank_first(self):
        """Two class-shifted features out of ten carry most of the kernel weight."""
        rng = np.random.default_rng(0)
        labels = np.array([0] * 75 + [1] * 75)
        features = rng.normal(size=(150, 10))
        features[:, 3] += 3.0 * labels
        features[:, 7] -= 3.0 * labels
        dataset = Dataset(features=features, labels=labels, class_count=2)
        embedder = registry.create("ikdr", Hyperparams(k=2, lam=0.1, mu=1.0), mode="multi").fit(dataset)
        alpha = embedder.model.alpha
        self.assertGreaterEqual(alpha[3] + alpha[7], 0.6)
        profile = evaluation.feature_selection_profile(alpha, dataset.feature_names,
                                                       gradient=embedder.model.alpha_gradient)
        self.assertEqual({index for index, _, _ in profile.entries[:2]}, {3, 7})



if __name__ == '__main__':
    unittest.main()
