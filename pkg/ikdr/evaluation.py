"""1-NN evaluation, cross-validation with inner tuning, and interpretability measures."""

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .config import Hyperparams
from .data import Dataset, FoldPlan, LabelIndicator, build_label_indicator, stratified_folds
from .embedders import Embedder, IKDREmbedder, registry
from .errors import IkdrError, InputError, NumericalError, ZeroColumnError
from .logger import get_logger

logger = get_logger(__name__)

# alpha entries above this count as selected features
SPARSITY_THRESHOLD = 1e-6

IP_NOTE = "Ip and class scores come from one fit on the full dataset with the most often selected hyperparameters"


@dataclass(frozen=True)
class FeatureProfile:
    """Kernel weights sorted by decreasing magnitude."""

    entries: Tuple[Tuple[int, str, float], ...]
    l0: int
    threshold: float = SPARSITY_THRESHOLD

    def to_dict(self) -> Dict[str, Any]:
        return {
            "l0": self.l0,
            "threshold": self.threshold,
            "features": [{"index": i, "name": name, "weight": w} for i, name, w in self.entries],
        }


@dataclass
class EvalReport:
    """Cross-validation outcome plus interpretation of a full-data fit."""

    method: str
    mode: str
    accuracy_mean: float
    accuracy_per_fold: List[float]
    ip_value: float
    dimension_class_scores: np.ndarray
    feature_profile: Optional[FeatureProfile]
    config_echo: Dict[str, Any]
    selected: List[Dict[str, float]] = field(default_factory=list)
    fold_bandwidths: List[List[float]] = field(default_factory=list)
    fold_plan: Optional[FoldPlan] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "mode": self.mode,
            "accuracy_mean": self.accuracy_mean,
            "accuracy_per_fold": list(self.accuracy_per_fold),
            "ip_value": self.ip_value,
            "dimension_class_scores": self.dimension_class_scores.tolist(),
            "feature_profile": self.feature_profile.to_dict() if self.feature_profile else None,
            "selected_hyperparams": list(self.selected),
            "notes": list(self.notes),
            "config_echo": self.config_echo,
        }


def knn_predict(train_embed: np.ndarray, train_labels: Sequence[int], test_embed: np.ndarray) -> np.ndarray:
    """Euclidean 1-NN in the embedded space.

    Args:
        train_embed: k x N training embedding
        train_labels: N training labels
        test_embed: k x M embedding of the samples to classify

    Returns:
        M predicted labels; ties go to the smallest training index
    """
    train_labels = np.asarray(train_labels)
    distances = cdist(np.atleast_2d(test_embed.T), np.atleast_2d(train_embed.T), metric="sqeuclidean")
    return train_labels[np.argmin(distances, axis=1)]


def accuracy(predicted: Sequence[int], truth: Sequence[int]) -> float:
    return float(np.mean(np.asarray(predicted) == np.asarray(truth)))


def _nonnegative(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.min() < -1e-9:
        raise InputError(f"coefficients must be nonnegative, minimum is {A.min():.3e}")
    return np.maximum(A, 0.0)


def dimension_class_scores(A: np.ndarray, H: LabelIndicator) -> np.ndarray:
    """D = H A with every column scaled to unit l1-norm (C x k)."""
    D = H.H @ _nonnegative(A)
    sums = D.sum(axis=0)
    if np.any(sums <= 0.0):
        raise ZeroColumnError(f"embedding dimension(s) {np.flatnonzero(sums <= 0.0).tolist()} carry no weight")
    return D / sums


def ip_measure(A: np.ndarray, H: LabelIndicator) -> float:
    """Mean over dimensions of the largest class share of each column's mass."""
    return float(np.mean(dimension_class_scores(A, H).max(axis=0)))


def feature_selection_profile(alpha: Sequence[float], feature_names: Sequence[str],
                              threshold: float = SPARSITY_THRESHOLD,
                              gradient: Optional[Sequence[float]] = None) -> FeatureProfile:
    """Sort kernel weights descending.

    Weights at or below `threshold` count as zero. Among those, a smaller
    entry of `gradient` (the kernel-weight QP gradient at alpha) ranks
    first. Remaining ties keep feature order.
    """
    alpha = np.asarray(alpha, dtype=float)
    if len(feature_names) != alpha.size:
        raise InputError(f"{alpha.size} weights for {len(feature_names)} feature names")
    weights = np.where(alpha > threshold, alpha, 0.0)
    if gradient is None or len(gradient) == 0:
        order = np.argsort(-weights, kind="stable")
    else:
        gradient = np.asarray(gradient, dtype=float)
        if gradient.shape != alpha.shape:
            raise InputError(f"{gradient.size} gradient entries for {alpha.size} weights")
        # lexsort keys run from least to most significant
        order = np.lexsort((np.arange(alpha.size), np.where(weights > 0.0, 0.0, gradient), -weights))
    entries = tuple((int(m), str(feature_names[m]), float(alpha[m])) for m in order)
    return FeatureProfile(entries=entries, l0=int(np.sum(alpha > threshold)), threshold=threshold)


def _score(embedder: Embedder, train: Dataset, test: Dataset) -> float:
    embedder.fit(train)
    predicted = knn_predict(embedder.train_embedding, train.labels, embedder.transform(test.features))
    return accuracy(predicted, test.labels)


def tune(dataset: Dataset, candidates: Sequence[Hyperparams], inner_folds: int, seed: int,
         method: str = "ikdr", mode: str = "single", center: bool = False) -> Tuple[int, List[float]]:
    """Inner grid search.

    Returns:
        (index of the best candidate, mean inner accuracy of every candidate)
    """
    if len(candidates) == 1:
        return 0, [float("nan")]
    counts = np.bincount(dataset.labels, minlength=dataset.class_count)
    if counts[counts > 0].min() < 2:
        logger.warning("A class has fewer than 2 training samples; skipping tuning, using the first grid entry")
        return 0, [float("nan")] * len(candidates)
    plan = stratified_folds(dataset, inner_folds, seed)
    scores = []
    failures = 0
    for candidate in candidates:
        fold_scores = []
        try:
            for train_idx, test_idx in plan.folds:
                embedder = registry.create(method, candidate, mode=mode, center=center)
                fold_scores.append(_score(embedder, dataset.subset(train_idx), dataset.subset(test_idx)))
            scores.append(float(np.mean(fold_scores)))
        except NumericalError as e:
            failures += 1
            logger.warning(f"Grid candidate lambda={candidate.lam:g}, mu={candidate.mu:g} failed: {e}")
            scores.append(0.0)
    if failures == len(candidates):
        raise NumericalError("every grid candidate failed during tuning")
    return int(np.argmax(scores)), scores


def _first_working(order: Sequence[int], attempt: Callable[[int], Any], context: str) -> Tuple[int, Any]:
    """Run `attempt` on grid indices in `order` until one avoids a NumericalError."""
    failure: Optional[NumericalError] = None
    for pick in order:
        try:
            return pick, attempt(pick)
        except NumericalError as e:
            logger.warning(f"{context}: grid entry {pick} failed ({e}); trying the next one")
            failure = e
    raise failure


def _evaluate_fold(index: int, dataset: Dataset, plan: FoldPlan, candidates: Sequence[Hyperparams],
                   inner_folds: int, seed: int, method: str, mode: str,
                   center: bool) -> Tuple[float, int, List[float]]:
    train_idx, test_idx = plan.folds[index]
    train, test = dataset.subset(train_idx), dataset.subset(test_idx)
    embedders: Dict[int, Embedder] = {}

    def refit(pick: int) -> float:
        embedders[pick] = registry.create(method, candidates[pick], mode=mode, center=center)
        return _score(embedders[pick], train, test)

    try:
        best, inner_scores = tune(train, candidates, inner_folds, seed + index + 1, method, mode, center)
        ranked = sorted(range(len(candidates)),
                        key=lambda i: (i != best, -np.nan_to_num(inner_scores[i], nan=-1.0), i))
        best, score = _first_working(ranked, refit, f"Fold {index}")
    except IkdrError as e:
        e.args = (f"fold {index}: {e}",)
        raise
    logger.info(f"Fold {index}: accuracy {score:.4f} (lambda={candidates[best].lam:g}, mu={candidates[best].mu:g})")
    return score, best, list(embedders[best].bandwidths)


def _full_fit(dataset: Dataset, hyper: Hyperparams, method: str, mode: str, center: bool) -> Embedder:
    embedder = registry.create(method, hyper, mode=mode, center=center)
    return embedder.fit(dataset)


def interpretation(embedder: Embedder, dataset: Dataset) -> Tuple[float, np.ndarray]:
    """(Ip, class scores) of a fitted embedder; signed coefficients are taken by magnitude."""
    H = build_label_indicator(dataset.labels, dataset.class_count)
    A = embedder.coefficients
    if isinstance(embedder, IKDREmbedder):
        return ip_measure(A, H), dimension_class_scores(A, H)
    return ip_measure(np.abs(A), H), dimension_class_scores(np.abs(A), H)


def cross_validate(dataset: Dataset, hyper_grid: Sequence[Hyperparams], fold_count: int, seed: int,
                   mode: str = "single", method: str = "ikdr", inner_folds: int = 5, threads: int = 1,
                   center: bool = False, config_echo: Optional[Dict[str, Any]] = None) -> EvalReport:
    """Stratified outer CV with an inner grid search on every training split.

    Args:
        dataset: The full dataset
        hyper_grid: Candidate hyperparameters; a single entry disables tuning
        fold_count: Outer folds
        seed: Seed for the fold plans
        mode: "single" or "multi" kernel mode
        method: Registered embedder name
        inner_folds: Folds of the inner grid search
        threads: Maximum number of folds evaluated at once
        center: Kernel centering (K-PCA only)
        config_echo: Effective settings copied into the report

    Returns:
        EvalReport
    """
    if not hyper_grid:
        raise InputError("hyperparameter grid is empty")
    candidates = list(hyper_grid)
    plan = stratified_folds(dataset, fold_count, seed)
    logger.info(f"Cross-validating {method} ({mode} kernel) over {plan.fold_count} folds, "
                f"{len(candidates)} grid candidate(s)")

    def run_fold(index: int) -> Tuple[float, int, List[float]]:
        return _evaluate_fold(index, dataset, plan, candidates, inner_folds, seed, method, mode, center)

    indices = range(plan.fold_count)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_fold, indices))
    else:
        results = [run_fold(index) for index in indices]

    scores = [r[0] for r in results]
    picks = [r[1] for r in results]
    # most frequent pick, earliest grid entry on ties
    counts = Counter(picks)
    ranked = sorted(range(len(candidates)), key=lambda i: (-counts[i], i))
    _, final = _first_working(ranked, lambda i: _full_fit(dataset, candidates[i], method, mode, center),
                              "Full-data fit")
    ip_value, class_scores = interpretation(final, dataset)

    profile = None
    if isinstance(final, IKDREmbedder) and final.model.mode == "multi":
        profile = feature_selection_profile(final.model.alpha, dataset.feature_names,
                                            gradient=final.model.alpha_gradient)

    report = EvalReport(
        method=method,
        mode=mode,
        accuracy_mean=float(np.mean(scores)),
        accuracy_per_fold=scores,
        ip_value=ip_value,
        dimension_class_scores=class_scores,
        feature_profile=profile,
        config_echo=dict(config_echo or {}),
        selected=[{"lambda": candidates[i].lam, "mu": candidates[i].mu} for i in picks],
        fold_bandwidths=[r[2] for r in results],
        fold_plan=plan,
        notes=[IP_NOTE],
    )
    if plan.fold_count != fold_count:
        report.notes.append(f"fold count reduced from {fold_count} to {plan.fold_count}")
    if method == "kpca":
        report.notes.append("K-PCA coefficients are signed; Ip uses their magnitudes")
    logger.info(f"Mean accuracy {report.accuracy_mean:.4f}, Ip {report.ip_value:.4f}")
    return report


def accuracy_sweep(dataset: Dataset, ks: Sequence[int], hyper: Hyperparams, fold_count: int, seed: int,
                   mode: str = "single", method: str = "ikdr", threads: int = 1,
                   center: bool = False) -> List[Tuple[int, float]]:
    """Mean CV accuracy for every target dimension in `ks`, hyperparameters fixed."""
    rows = []
    for k in ks:
        report = cross_validate(dataset, [hyper.with_updates(k=k)], fold_count, seed, mode=mode,
                                method=method, threads=threads, center=center)
        rows.append((int(k), report.accuracy_mean))
        logger.info(f"k={k}: accuracy {report.accuracy_mean:.4f}")
    return rows


def compare_with_kpca(dataset: Dataset, hyper_grid: Sequence[Hyperparams], fold_count: int, seed: int,
                      mode: str = "single", inner_folds: int = 5, threads: int = 1,
                      center: bool = False) -> Dict[str, EvalReport]:
    """I-KDR and K-PCA on the same folds and the same target dimension."""
    ikdr_report = cross_validate(dataset, hyper_grid, fold_count, seed, mode=mode, method="ikdr",
                                 inner_folds=inner_folds, threads=threads)
    kpca_report = cross_validate(dataset, [hyper_grid[0]], fold_count, seed, mode="single", method="kpca",
                                 threads=threads, center=center)
    return {"ikdr": ikdr_report, "kpca": kpca_report}
