"""Dataset ingestion, label encoding and cross-validation fold planning."""

import os
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import DataFileError, InputError
from .logger import get_logger

logger = get_logger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Dataset:
    """N samples by d features with integer class labels 0..C-1.

    Every class must have a sample unless `require_all_classes` is off, as
    it is for cross-validation splits.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    label_names: Tuple[str, ...] = ()
    feature_names: Tuple[str, ...] = ()
    require_all_classes: bool = True

    def __post_init__(self):
        features = np.array(self.features, dtype=float)
        labels = np.array(self.labels, dtype=int)

        if features.ndim != 2:
            raise InputError(f"features must be a 2-D matrix, got shape {features.shape}")
        n_samples, n_features = features.shape
        minimum = 2 if self.require_all_classes else 1
        if n_samples < minimum or n_features < 1:
            raise InputError(f"dataset needs N >= {minimum} and d >= 1, got N={n_samples}, d={n_features}")
        if labels.shape != (n_samples,):
            raise InputError(f"expected {n_samples} labels, got shape {labels.shape}")
        if self.class_count < 2:
            raise InputError(f"dataset needs at least 2 classes, got {self.class_count}")
        if not np.all(np.isfinite(features)):
            raise InputError("features contain NaN or infinite values")
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise InputError(f"labels must lie in [0, {self.class_count})")
        missing = np.setdiff1d(np.arange(self.class_count), labels)
        if missing.size and self.require_all_classes:
            raise InputError(f"classes {missing.tolist()} have no samples")

        label_names = tuple(self.label_names) or tuple(str(q) for q in range(self.class_count))
        feature_names = tuple(self.feature_names) or tuple(f"f{m}" for m in range(n_features))
        if len(label_names) != self.class_count:
            raise InputError("label_names must have one entry per class")
        if len(feature_names) != n_features:
            raise InputError("feature_names must have one entry per feature")

        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "label_names", label_names)
        object.__setattr__(self, "feature_names", feature_names)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def label_map(self) -> Dict[str, int]:
        """Original label value -> encoded class id."""
        return {name: q for q, name in enumerate(self.label_names)}

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Rows selected by `indices`, keeping the global class encoding."""
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            features=self.features[indices],
            labels=self.labels[indices],
            class_count=self.class_count,
            label_names=self.label_names,
            feature_names=self.feature_names,
            require_all_classes=False,
        )


@dataclass(frozen=True)
class LabelIndicator:
    """Binary C x N class indicator H and its logical complement."""

    H: np.ndarray

    @property
    def complement(self) -> np.ndarray:
        return 1.0 - self.H

    @property
    def class_sizes(self) -> np.ndarray:
        return self.H.sum(axis=1)

    def dissimilarity(self) -> np.ndarray:
        """H-bar^T H: entry (s, t) is 1 when samples s and t belong to different classes."""
        return self.complement.T @ self.H


@dataclass(frozen=True)
class FoldPlan:
    """Stratified (train, test) index pairs."""

    folds: Tuple[Tuple[np.ndarray, np.ndarray], ...]
    fold_count: int
    seed: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fold_count": self.fold_count,
            "seed": self.seed,
            "folds": [
                {"train": train.tolist(), "test": test.tolist()}
                for train, test in self.folds
            ],
        }


def _read_frame(path: str) -> pd.DataFrame:
    if not os.path.isfile(path):
        raise DataFileError("file not found", path=path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataFileError("empty file", path=path)
    except (UnicodeDecodeError, pd.errors.ParserError) as e:
        raise DataFileError(f"unreadable CSV: {e}", path=path)
    if frame.shape[0] == 0:
        raise DataFileError("empty file: header present but no data rows", path=path)
    return frame


def _numeric_columns(frame: pd.DataFrame, names: Sequence[str], path: str) -> np.ndarray:
    columns: List[np.ndarray] = []
    for name in names:
        raw = frame[name].str.strip()
        numeric = pd.to_numeric(raw, errors="coerce")
        bad = numeric.isna().to_numpy()
        if bad.any():
            position = int(np.flatnonzero(bad)[0])
            # header is line 1
            raise DataFileError(
                f"non-numeric feature cell '{raw.iloc[position]}'",
                path=path, row=position + 2, column=str(name),
            )
        columns.append(numeric.to_numpy(dtype=float))

    features = np.column_stack(columns)
    if not np.all(np.isfinite(features)):
        row = int(np.flatnonzero(~np.isfinite(features).all(axis=1))[0])
        raise DataFileError("infinite feature value", path=path, row=row + 2)
    return features


def load_csv(path: str, label_column: str) -> Dataset:
    """Load a dense CSV file with a header row.

    Args:
        path: Path to a UTF-8, comma-separated file
        label_column: Header name of the class label column

    Returns:
        Dataset with labels re-encoded to 0..C-1 in first-appearance order
    """
    frame = _read_frame(path)
    if label_column not in frame.columns:
        raise DataFileError(
            f"label column not found; available columns: {', '.join(map(str, frame.columns))}",
            path=path, column=label_column,
        )

    feature_names = [str(c) for c in frame.columns if c != label_column]
    if not feature_names:
        raise DataFileError("no feature columns besides the label column", path=path)
    features = _numeric_columns(frame, feature_names, path)

    codes, uniques = pd.factorize(frame[label_column].str.strip(), sort=False)
    if len(uniques) < 2:
        raise DataFileError(
            f"single class: label column has only the value '{uniques[0]}'",
            path=path, column=label_column,
        )

    dataset = Dataset(
        features=features,
        labels=codes,
        class_count=len(uniques),
        label_names=tuple(str(u) for u in uniques),
        feature_names=tuple(feature_names),
    )
    logger.info(
        f"Loaded {path}: N={dataset.n_samples}, d={dataset.n_features}, C={dataset.class_count}"
    )
    logger.debug(f"Label encoding: {dataset.label_map}")
    return dataset


def load_features(path: str, feature_names: Sequence[str]) -> np.ndarray:
    """Read the named feature columns of a CSV file, in the given order.

    A label column may be present and is ignored.
    """
    frame = _read_frame(path)
    missing = [name for name in feature_names if name not in frame.columns]
    if missing:
        raise DataFileError(f"missing feature column(s): {', '.join(missing)}", path=path)
    features = _numeric_columns(frame, feature_names, path)
    logger.info(f"Loaded {features.shape[0]} samples with {features.shape[1]} features from {path}")
    return features


def build_label_indicator(labels: Sequence[int], class_count: int) -> LabelIndicator:
    """Build the one-hot C x N indicator matrix H.

    Args:
        labels: Encoded class ids
        class_count: Number of classes C

    Returns:
        LabelIndicator with H[q, i] = 1 iff labels[i] = q
    """
    labels = np.asarray(labels, dtype=int)
    if class_count < 2:
        raise InputError(f"at least 2 classes are required, got {class_count}")
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise InputError(f"label out of range [0, {class_count})")

    H = np.zeros((class_count, labels.size))
    H[labels, np.arange(labels.size)] = 1.0
    return LabelIndicator(H=_frozen(H))


def stratified_folds(dataset: Dataset, fold_count: int, seed: int) -> FoldPlan:
    """Plan stratified folds with per-class shuffling.

    Each class is shuffled with a seeded numpy Generator and dealt round-robin
    over the folds; the dealing position carries over from one class to the
    next so fold sizes differ by at most one.

    Args:
        dataset: The dataset to split
        fold_count: Requested number of folds
        seed: Seed for the shuffling generator

    Returns:
        FoldPlan whose test sets partition 0..N-1
    """
    return _plan_folds(dataset.labels, dataset.class_count, fold_count, seed)


def _plan_folds(labels: np.ndarray, class_count: int, fold_count: int, seed: int) -> FoldPlan:
    n_samples = labels.size
    if fold_count < 2:
        raise InputError(f"fold count must be at least 2, got {fold_count}")
    if fold_count > n_samples:
        raise InputError(f"fold count {fold_count} exceeds the number of samples {n_samples}")

    counts = np.bincount(labels, minlength=class_count)
    smallest = int(counts[counts > 0].min())
    effective = fold_count
    if smallest < fold_count:
        effective = max(2, smallest)
        logger.warning(
            f"Smallest class has {smallest} samples; using {effective} folds instead of {fold_count}"
        )

    rng = np.random.default_rng(seed)
    assignment = np.empty(n_samples, dtype=int)
    position = 0
    for q in range(class_count):
        members = np.flatnonzero(labels == q)
        members = members[rng.permutation(members.size)]
        assignment[members] = (position + np.arange(members.size)) % effective
        position = (position + members.size) % effective

    everything = np.arange(n_samples)
    folds = []
    for f in range(effective):
        test = _frozen(np.flatnonzero(assignment == f))
        train = _frozen(np.setdiff1d(everything, test))
        folds.append((train, test))

    return FoldPlan(folds=tuple(folds), fold_count=effective, seed=seed)
