"""Exceptions raised by the I-KDR toolkit.

Input problems map to CLI exit code 1, numerical failures to exit code 2.
"""

from typing import Optional, Sequence


class IkdrError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class InputError(IkdrError):
    """Bad files, bad shapes or invalid settings."""

    exit_code = 1


class DataFileError(InputError):
    """A dataset file could not be turned into a Dataset."""

    def __init__(self, message: str, path: Optional[str] = None, row: Optional[int] = None,
                 column: Optional[str] = None):
        location = []
        if path is not None:
            location.append(f"file {path}")
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.path = path
        self.row = row
        self.column = column


class DimensionError(InputError):
    """Array shapes do not agree."""


class SchemaError(InputError):
    """A persisted model has an unsupported schema version."""


class NumericalError(IkdrError):
    """A computation produced an unusable result."""

    exit_code = 2


class ZeroBandwidthError(NumericalError):
    """All points coincide, so the Gaussian bandwidth is zero."""


class NonFiniteObjectiveError(NumericalError):
    """An objective or QP value became NaN or infinite."""


class FactorizationError(NumericalError):
    """The A-step linear system is singular."""

    def __init__(self, message: str, rho: float, p_eigenvalues: Sequence[float],
                 q_eigenvalues: Sequence[float]):
        p_min, p_max = min(p_eigenvalues), max(p_eigenvalues)
        q_min, q_max = min(q_eigenvalues), max(q_eigenvalues)
        super().__init__(
            f"{message} (rho={rho:g}, eig(P) in [{p_min:.3e}, {p_max:.3e}], "
            f"eig(Q) in [{q_min:.3e}, {q_max:.3e}])"
        )
        self.rho = rho
        self.p_eigenvalues = list(p_eigenvalues)
        self.q_eigenvalues = list(q_eigenvalues)


class DivergenceError(NumericalError):
    """ADMM primal residuals kept growing."""

    def __init__(self, message: str, iteration: int, residuals: Sequence[float]):
        tail = ", ".join(f"{r:.3e}" for r in list(residuals)[-5:])
        super().__init__(f"{message} at ADMM iteration {iteration} (last residuals: {tail})")
        self.iteration = iteration
        self.residuals = list(residuals)


class KernelPCAError(NumericalError):
    """The kernel has fewer positive eigenvalues than requested dimensions."""


class ZeroColumnError(NumericalError):
    """An embedding column carries no mass and cannot be normalized."""
