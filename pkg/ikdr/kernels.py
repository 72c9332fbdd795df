"""Gaussian kernels, per-feature kernel bundles and graph Laplacians."""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import DimensionError, InputError, ZeroBandwidthError
from .logger import get_logger

logger = get_logger(__name__)

BANDWIDTH_RULES = ("mean", "squared-mean")

# bandwidth value recorded for a kernel that degraded to the identity
IDENTITY_BANDWIDTH = 0.0


@dataclass(frozen=True)
class KernelMatrix:
    """A single N x N Gram matrix."""

    values: np.ndarray
    bandwidth: Optional[float] = None

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class KernelBundle:
    """f base Gram matrices stacked as an (f, N, N) array with simplex weights alpha.

    `per_feature` tells whether base kernel m was built from feature column m
    alone (multi-kernel mode) or from all features (single-kernel mode, f = 1).
    A zero bandwidth marks a base kernel that degraded to the identity.
    """

    stack: np.ndarray
    alpha: np.ndarray
    bandwidths: Tuple[float, ...]
    per_feature: bool
    flagged: Tuple[int, ...] = ()
    bandwidth_rule: str = "mean"

    def __post_init__(self):
        stack = np.asarray(self.stack, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
            raise DimensionError(f"kernel stack must have shape (f, N, N), got {stack.shape}")
        if alpha.shape != (stack.shape[0],):
            raise DimensionError(f"alpha has shape {alpha.shape}, expected ({stack.shape[0]},)")
        if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > 1e-9:
            raise InputError("kernel weights must be nonnegative and sum to 1")
        if len(self.bandwidths) != stack.shape[0]:
            raise DimensionError("one bandwidth per base kernel is required")
        stack.setflags(write=False)
        object.__setattr__(self, "stack", stack)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def single(cls, kernel: KernelMatrix, bandwidth_rule: str = "mean") -> "KernelBundle":
        """Wrap one full-feature kernel as a bundle with alpha = [1]."""
        bandwidth = IDENTITY_BANDWIDTH if kernel.bandwidth is None else kernel.bandwidth
        return cls(
            stack=kernel.values[np.newaxis, :, :],
            alpha=np.ones(1),
            bandwidths=(float(bandwidth),),
            per_feature=False,
            bandwidth_rule=bandwidth_rule,
        )

    @property
    def kernel_count(self) -> int:
        return self.stack.shape[0]

    @property
    def size(self) -> int:
        return self.stack.shape[1]

    @property
    def base(self) -> List[KernelMatrix]:
        return [KernelMatrix(values=self.stack[m], bandwidth=self.bandwidths[m])
                for m in range(self.kernel_count)]

    def with_alpha(self, alpha: Sequence[float]) -> "KernelBundle":
        return KernelBundle(
            stack=self.stack,
            alpha=np.asarray(alpha, dtype=float),
            bandwidths=self.bandwidths,
            per_feature=self.per_feature,
            flagged=self.flagged,
            bandwidth_rule=self.bandwidth_rule,
        )


def _as_matrix(K: Union[KernelMatrix, np.ndarray]) -> np.ndarray:
    return K.values if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)


def gaussian_bandwidth(features: np.ndarray, rule: str = "mean") -> float:
    """Bandwidth from the pairwise distances of the training samples.

    `mean` averages the plain Euclidean distances, `squared-mean` averages
    their squares.
    """
    if rule not in BANDWIDTH_RULES:
        raise InputError(f"unknown bandwidth rule '{rule}', expected one of {BANDWIDTH_RULES}")
    distances = pdist(features, metric="euclidean")
    delta = float(np.mean(distances ** 2)) if rule == "squared-mean" else float(np.mean(distances))
    if delta <= 0.0:
        raise ZeroBandwidthError("zero bandwidth: all samples are identical")
    return delta


def gaussian_kernel(features: np.ndarray, rule: str = "mean") -> KernelMatrix:
    """K[i, j] = exp(-||y_i - y_j||^2 / delta).

    Args:
        features: N x d training matrix
        rule: Bandwidth rule, `mean` or `squared-mean`

    Returns:
        KernelMatrix with the bandwidth it was built with
    """
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, np.newaxis]
    if features.shape[0] < 2:
        raise InputError(f"a Gaussian kernel needs at least 2 samples, got {features.shape[0]}")
    if not np.all(np.isfinite(features)):
        raise InputError("features contain NaN or infinite values")

    delta = gaussian_bandwidth(features, rule)
    squared = squareform(pdist(features, metric="sqeuclidean"))
    values = np.exp(-squared / delta)
    values.setflags(write=False)
    return KernelMatrix(values=values, bandwidth=delta)


def per_feature_kernels(features: np.ndarray, rule: str = "mean") -> KernelBundle:
    """One Gaussian kernel per feature column, uniform initial weights.

    A constant column cannot define a bandwidth; its kernel becomes the
    identity (no similarity information) and its index is recorded in
    `flagged`.
    """
    features = np.asarray(features, dtype=float)
    n_samples, n_features = features.shape
    if n_features < 2:
        raise InputError(f"multi-kernel mode needs at least 2 features, got {n_features}")

    stack = np.empty((n_features, n_samples, n_samples))
    bandwidths = []
    flagged = []
    for m in range(n_features):
        try:
            kernel = gaussian_kernel(features[:, m], rule)
            stack[m] = kernel.values
            bandwidths.append(kernel.bandwidth)
        except ZeroBandwidthError:
            logger.warning(f"Feature {m} is constant; its kernel is replaced by the identity")
            stack[m] = np.eye(n_samples)
            bandwidths.append(IDENTITY_BANDWIDTH)
            flagged.append(m)

    return KernelBundle(
        stack=stack,
        alpha=np.full(n_features, 1.0 / n_features),
        bandwidths=tuple(bandwidths),
        per_feature=True,
        flagged=tuple(flagged),
        bandwidth_rule=rule,
    )


def weighted_kernel(bundle: KernelBundle) -> KernelMatrix:
    """K-hat = sum_m alpha_m K_m."""
    values = np.tensordot(bundle.alpha, bundle.stack, axes=1)
    return KernelMatrix(values=values)


def laplacian(K: Union[KernelMatrix, np.ndarray]) -> np.ndarray:
    """K-tilde = diag(K 1) - K."""
    values = _as_matrix(K)
    return np.diag(values.sum(axis=1)) - values


def cross_kernel(train_features: np.ndarray, test_features: np.ndarray,
                 bandwidths: Sequence[float], alpha: Sequence[float]) -> np.ndarray:
    """Kernel values between training rows and unseen rows.

    With one bandwidth the kernel runs over all features; with one bandwidth
    per feature each feature gets its own kernel and the results are mixed
    by alpha. Bandwidths always come from the training split.

    Args:
        train_features: N x d training matrix
        test_features: M x d matrix of new samples
        bandwidths: Training-time bandwidths, one per base kernel
        alpha: Kernel weights

    Returns:
        N x M cross-kernel matrix
    """
    train = np.asarray(train_features, dtype=float)
    test = np.asarray(test_features, dtype=float)
    if test.ndim == 1:
        test = test[np.newaxis, :]
    alpha = np.asarray(alpha, dtype=float)
    if train.ndim != 2 or test.shape[1] != train.shape[1]:
        raise DimensionError(
            f"test data has {test.shape[1]} features, training data has {train.shape[1]}"
        )
    if alpha.shape != (len(bandwidths),):
        raise DimensionError("alpha and bandwidths must have the same length")

    identical = None
    if any(b == IDENTITY_BANDWIDTH for b in bandwidths):
        identical = (cdist(train, test, metric="sqeuclidean") == 0.0).astype(float)

    if len(bandwidths) == 1:
        if bandwidths[0] == IDENTITY_BANDWIDTH:
            return identical
        return np.exp(-cdist(train, test, metric="sqeuclidean") / bandwidths[0])

    if len(bandwidths) != train.shape[1]:
        raise DimensionError(
            f"{len(bandwidths)} per-feature bandwidths for {train.shape[1]} features"
        )

    result = np.zeros((train.shape[0], test.shape[0]))
    for m, (weight, delta) in enumerate(zip(alpha, bandwidths)):
        if weight == 0.0:
            continue
        if delta == IDENTITY_BANDWIDTH:
            result += weight * identical
            continue
        squared = (train[:, m, np.newaxis] - test[np.newaxis, :, m]) ** 2
        result += weight * np.exp(-squared / delta)
    return result
