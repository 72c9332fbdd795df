"""Uncentered kernel PCA baseline."""

from typing import Union

import numpy as np
from scipy.linalg import eigh

from .errors import DimensionError, InputError, KernelPCAError
from .kernels import KernelMatrix
from .logger import get_logger

logger = get_logger(__name__)

# eigenvalues at or below this fraction of the largest count as zero
EIGENVALUE_FLOOR = 1e-12


def _values(K: Union[KernelMatrix, np.ndarray]) -> np.ndarray:
    return K.values if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)


def center_kernel(K: np.ndarray) -> np.ndarray:
    """Double-center a training Gram matrix."""
    row_means = K.mean(axis=0, keepdims=True)
    col_means = K.mean(axis=1, keepdims=True)
    return K - row_means - col_means + K.mean()


def center_cross_kernel(K_train: np.ndarray, K_cross: np.ndarray) -> np.ndarray:
    """Center an N x M cross kernel with the training feature-space mean."""
    return (K_cross - K_cross.mean(axis=0, keepdims=True)
            - K_train.mean(axis=1, keepdims=True) + K_train.mean())


def kpca_fit(K: Union[KernelMatrix, np.ndarray], k: int, center: bool = False) -> np.ndarray:
    """Top-k eigenvectors of K scaled so that A^T K A = I.

    Args:
        K: N x N training kernel
        k: Number of components
        center: Double-center K first

    Returns:
        N x k coefficient matrix, columns ordered by decreasing eigenvalue
    """
    values = _values(K)
    n_samples = values.shape[0]
    if k < 1 or k > n_samples:
        raise InputError(f"k must lie in [1, {n_samples}], got {k}")
    if center:
        values = center_kernel(values)

    eigenvalues, eigenvectors = eigh(0.5 * (values + values.T))
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]

    positive = int(np.sum(eigenvalues > EIGENVALUE_FLOOR * max(eigenvalues[0], 0.0)))
    if eigenvalues[0] <= 0.0 or positive < k:
        raise KernelPCAError(f"kernel has {positive} positive eigenvalues, {k} components requested")

    vectors = eigenvectors[:, :k]
    # fix the sign so the largest-magnitude entry of every column is positive
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(k)])
    vectors = vectors * signs
    logger.debug(f"K-PCA kept eigenvalues {eigenvalues[:k]}")
    return vectors / np.sqrt(eigenvalues[:k])


def kpca_transform(A: np.ndarray, cross_kernel_values: np.ndarray) -> np.ndarray:
    """Embed samples from their N x M cross kernel: A^T K(train, test)."""
    if cross_kernel_values.shape[0] != A.shape[0]:
        raise DimensionError(
            f"cross kernel has {cross_kernel_values.shape[0]} rows, A has {A.shape[0]}"
        )
    return A.T @ cross_kernel_values


def kpca_reconstruction_error(K: Union[KernelMatrix, np.ndarray], A: np.ndarray) -> float:
    """||Phi - Phi A A^T K||_F^2 through the kernel trick."""
    values = _values(K)
    KA = values @ A
    gram = A.T @ KA
    return float(np.trace(values) - 2.0 * np.sum(KA * KA) + np.trace((KA.T @ KA) @ gram))
