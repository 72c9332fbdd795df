"""I-KDR - Interpretable kernel dimensionality reduction with kernel-based feature selection."""

__version__ = "0.1.0"
