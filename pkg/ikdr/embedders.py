"""Embedding methods behind one fit/transform interface, and their registry."""

from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Type

import numpy as np

from .config import Hyperparams
from .core import EmbeddingModel, build_kernels, fit, transform
from .data import Dataset
from .errors import InputError
from .kernels import cross_kernel, gaussian_kernel, weighted_kernel
from .kpca import center_cross_kernel, kpca_fit, kpca_transform
from .logger import get_logger

logger = get_logger(__name__)


class Embedder(ABC):
    """Abstract base class for kernel embedding methods."""

    def __init__(self, hyper: Hyperparams, mode: str = "single", center: bool = False):
        """Initialize the embedder.

        Args:
            hyper: Hyperparameters; every method reads at least k and the bandwidth rule
            mode: Kernel mode, "single" or "multi"
            center: Center the kernel (K-PCA only)
        """
        self.hyper = hyper
        self.mode = mode
        self.center = center
        self.train_embedding: Optional[np.ndarray] = None
        self.coefficients: Optional[np.ndarray] = None
        self.bandwidths: List[float] = []

    @abstractmethod
    def fit(self, dataset: Dataset) -> "Embedder":
        """Fit on a training split. Must be implemented by subclasses."""

    @abstractmethod
    def transform(self, features: np.ndarray) -> np.ndarray:
        """Embed new samples as a k x M matrix. Must be implemented by subclasses."""

    def _require_fit(self) -> None:
        if self.coefficients is None:
            raise InputError(f"{type(self).__name__}.transform called before fit")


class IKDREmbedder(Embedder):
    """I-KDR with one Gaussian kernel or per-feature kernels."""

    def __init__(self, hyper: Hyperparams, mode: str = "single", center: bool = False):
        super().__init__(hyper, mode, center)
        self.model: Optional[EmbeddingModel] = None

    def fit(self, dataset: Dataset) -> "IKDREmbedder":
        bundle = build_kernels(dataset.features, self.mode, self.hyper.bandwidth_rule)
        self.model = fit(dataset, bundle, self.hyper)
        self.coefficients = self.model.A
        self.bandwidths = list(self.model.bandwidths)
        K = weighted_kernel(bundle.with_alpha(self.model.alpha))
        self.train_embedding = self.model.A.T @ K.values
        return self

    def transform(self, features: np.ndarray) -> np.ndarray:
        self._require_fit()
        return transform(self.model, features)


class KernelPCAEmbedder(Embedder):
    """Kernel PCA on one Gaussian kernel, uncentered unless asked."""

    def __init__(self, hyper: Hyperparams, mode: str = "single", center: bool = False):
        super().__init__(hyper, mode, center)
        self.train_features: Optional[np.ndarray] = None
        self.train_kernel: Optional[np.ndarray] = None

    def fit(self, dataset: Dataset) -> "KernelPCAEmbedder":
        kernel = gaussian_kernel(dataset.features, self.hyper.bandwidth_rule)
        self.train_features = np.array(dataset.features)
        self.train_kernel = kernel.values
        self.bandwidths = [kernel.bandwidth]
        self.coefficients = kpca_fit(kernel, self.hyper.k, center=self.center)
        self.train_embedding = self.transform(dataset.features)
        return self

    def transform(self, features: np.ndarray) -> np.ndarray:
        self._require_fit()
        values = cross_kernel(self.train_features, features, self.bandwidths, np.ones(1))
        if self.center:
            values = center_cross_kernel(self.train_kernel, values)
        return kpca_transform(self.coefficients, values)


class EmbedderRegistry:
    """Map method names to embedder classes."""

    def __init__(self):
        """Initialize the registry with the built-in methods."""
        self.embedder_classes: Dict[str, Type[Embedder]] = {
            "ikdr": IKDREmbedder,
            "kpca": KernelPCAEmbedder,
        }

    def register(self, name: str, embedder_class: Type[Embedder]) -> None:
        """Register an embedder class.

        Args:
            name: The method name
            embedder_class: The embedder class
        """
        self.embedder_classes[name] = embedder_class
        logger.debug(f"Registered embedder class: {name}")

    def create(self, name: str, hyper: Hyperparams, mode: str = "single", center: bool = False) -> Embedder:
        """Create an embedder instance.

        Args:
            name: The method name
            hyper: Hyperparameters for the instance
            mode: Kernel mode
            center: Kernel centering flag

        Returns:
            A fresh, unfitted embedder
        """
        if name not in self.embedder_classes:
            raise InputError(f"unknown embedding method '{name}', known: {', '.join(sorted(self.embedder_classes))}")
        return self.embedder_classes[name](hyper, mode=mode, center=center)


# Create a global registry instance
registry = EmbedderRegistry()
