"""Tests for the reports module."""

import json
import os
import sys
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_array_equal

# Add the parent directory to the path so we can import the package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from ikdr.config import Hyperparams
from ikdr.core import build_kernels, fit, transform
from ikdr.data import Dataset
from ikdr.errors import DataFileError, SchemaError
from ikdr.reports import (format_number, load_model, save_model, write_class_scores_csv, write_csv, write_json,
                          write_kernel_csv, write_trace_csv)


def read(path):
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read()


class TestWriters(unittest.TestCase):
    """Test JSON and CSV emission."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_format_number(self):
        """Twelve significant digits."""
        self.assertEqual(format_number(1.0 / 3.0), "0.333333333333")
        self.assertEqual(format_number(2.0), "2")
        self.assertEqual(format_number(1.5e-20), "1.5e-20")

    def test_json_rounding_and_arrays(self):
        """Floats are rounded, arrays become lists and NaN becomes null."""
        write_json(self.path("r.json"), {"x": 1.0 / 3.0, "m": np.eye(2), "n": float("nan"), "i": np.int64(4)})
        document = json.loads(read(self.path("r.json")))
        self.assertEqual(document["x"], 0.333333333333)
        self.assertEqual(document["m"], [[1.0, 0.0], [0.0, 1.0]])
        self.assertIsNone(document["n"])
        self.assertEqual(document["i"], 4)
        self.assertTrue(read(self.path("r.json")).endswith("\n"))

    def test_json_is_byte_identical(self):
        """Identical documents produce identical files."""
        document = {"b": [0.1 + 0.2, 1e-13], "a": {"z": 1, "y": 2}}
        write_json(self.path("one.json"), document)
        write_json(self.path("two.json"), document)
        self.assertEqual(read(self.path("one.json")), read(self.path("two.json")))
        self.assertLess(read(self.path("one.json")).index('"b"'), read(self.path("one.json")).index('"a"'))

    def test_csv(self):
        """Header then rows, floats formatted."""
        write_csv(self.path("t.csv"), ["k", "accuracy"], [(1, 0.5), (2, 2.0 / 3.0)])
        self.assertEqual(read(self.path("t.csv")), "k,accuracy\n1,0.5\n2,0.666666666667\n")

    def test_trace_csv(self):
        """The ADMM trace has the documented columns."""
        write_trace_csv(self.path("trace.csv"), [(1, 0.5, 0.25, 10.0)])
        self.assertEqual(read(self.path("trace.csv")),
                         "iter,primal_res_eq,primal_res_pos,objective\n1,0.5,0.25,10\n")

    def test_kernel_csv(self):
        """A plain matrix without header."""
        write_kernel_csv(self.path("k.csv"), np.array([[1.0, 0.5], [0.5, 1.0]]))
        self.assertEqual(read(self.path("k.csv")), "1,0.5\n0.5,1\n")

    def test_class_scores_csv(self):
        """Long format class,dim,score."""
        write_class_scores_csv(self.path("c.csv"), np.array([[1.0, 0.25], [0.0, 0.75]]), ["a", "b"])
        self.assertEqual(read(self.path("c.csv")), "class,dim,score\na,0,1\na,1,0.25\nb,0,0\nb,1,0.75\n")


class TestModelPersistence(unittest.TestCase):
    """Test saving and loading fitted models."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        rng = np.random.default_rng(0)
        features = np.vstack([rng.normal(size=(6, 3)), 2.0 + rng.normal(size=(6, 3))])
        self.dataset = Dataset(features=features, labels=[0] * 6 + [1] * 6, class_count=2,
                               label_names=("neg", "pos"), feature_names=("u", "v", "w"))
        self.hyper = Hyperparams(lam=0.01, k=2, max_outer=4, admm_iters=20)

    def fitted(self, mode):
        bundle = build_kernels(self.dataset.features, mode, "mean")
        return fit(self.dataset, bundle, self.hyper)

    def test_round_trip_transforms_identically(self):
        """fit, save, load, transform equals fit, transform, bit for bit."""
        for mode in ("single", "multi"):
            with self.subTest(mode=mode):
                model = self.fitted(mode)
                directory = os.path.join(self.tmp.name, mode)
                save_model(model, directory, self.dataset.label_names, self.dataset.feature_names)
                loaded, label_names, feature_names = load_model(directory)

                self.assertEqual(label_names, ["neg", "pos"])
                self.assertEqual(feature_names, ["u", "v", "w"])
                self.assertEqual(loaded.mode, model.mode)
                self.assertEqual(loaded.hyper, model.hyper)
                assert_array_equal(loaded.A, model.A)
                assert_array_equal(loaded.train_labels, model.train_labels)
                assert_array_equal(loaded.train_features, model.train_features)
                test = np.random.default_rng(1).normal(size=(4, 3))
                assert_array_equal(transform(loaded, test), transform(model, test))

    def test_schema_version_checked(self):
        """Unknown schema versions are refused."""
        directory = os.path.join(self.tmp.name, "m")
        save_model(self.fitted("single"), directory, self.dataset.label_names, self.dataset.feature_names)
        path = os.path.join(directory, "model.json")
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
        document["schema_version"] = 2
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(document, handle)
        with self.assertRaises(SchemaError):
            load_model(directory)

    def test_missing_model(self):
        """A directory without model.json cannot be loaded."""
        with self.assertRaises(DataFileError):
            load_model(self.tmp.name)


if __name__ == '__main__':
    unittest.main()
