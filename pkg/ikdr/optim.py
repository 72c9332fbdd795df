"""Optimization primitives: simplex projection, simplex QP, Sylvester solves and the ADMM A-update."""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import eigh

from .errors import DimensionError, DivergenceError, FactorizationError, NonFiniteObjectiveError
from .logger import get_logger

logger = get_logger(__name__)

# consecutive growing ADMM residuals tolerated before giving up
DIVERGENCE_WINDOW = 20
# an iteration counts as growing only above this relative increase
DIVERGENCE_STEP = 1e-3
# growth over the best residual of the pass needed to call it divergence
DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class QpProblem:
    """min 1/2 a^T Q a + v^T a over the probability simplex."""

    Q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        v = np.asarray(self.v, dtype=float).ravel()
        if Q.shape != (v.size, v.size):
            raise DimensionError(f"Q has shape {Q.shape} but v has length {v.size}")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "v", v)

    def objective(self, a: np.ndarray) -> float:
        return float(0.5 * a @ self.Q @ a + self.v @ a)

    def gradient(self, a: np.ndarray) -> np.ndarray:
        return self.Q @ a + self.v


@dataclass(frozen=True)
class AdmmState:
    """Primal iterates and multipliers of the A-subproblem.

    Delta (N x k) pairs with A = A_plus, delta (k) pairs with A^T 1 = 1.
    """

    A: np.ndarray
    A_plus: np.ndarray
    Delta: np.ndarray
    delta: np.ndarray
    rho: float
    iterations: int = 0
    converged: bool = False
    trace: Tuple[Tuple[int, float, float, float], ...] = ()

    @classmethod
    def start(cls, A: np.ndarray, rho: float) -> "AdmmState":
        """Fresh state around a feasible A with zero multipliers."""
        A = np.asarray(A, dtype=float)
        return cls(
            A=A.copy(),
            A_plus=np.maximum(A, 0.0),
            Delta=np.zeros_like(A),
            delta=np.zeros(A.shape[1]),
            rho=rho,
        )

    def residuals(self) -> Tuple[float, float]:
        """(||A^T 1 - 1||_inf, ||A - A_plus||_inf)."""
        eq = float(np.max(np.abs(self.A.sum(axis=0) - 1.0)))
        pos = float(np.max(np.abs(self.A - self.A_plus)))
        return eq, pos


def project_simplex(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {z >= 0, sum z = 1} by sorting and thresholding."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 1:
        return np.ones(1)
    u = np.sort(x)[::-1]
    cumulative = np.cumsum(u) - 1.0
    ranks = np.arange(1, x.size + 1)
    support = np.flatnonzero(u - cumulative / ranks > 0)[-1]
    theta = cumulative[support] / (support + 1.0)
    z = np.maximum(x - theta, 0.0)
    return z / z.sum()


def solve_simplex_qp(problem: QpProblem, x0: np.ndarray, max_iter: int = 500, tol: float = 1e-8,
                     history: Optional[List[float]] = None) -> np.ndarray:
    """Projected gradient descent with Armijo backtracking over the simplex.

    Args:
        problem: The quadratic program
        x0: Feasible starting point
        max_iter: Iteration cap
        tol: Stop when the projected-gradient norm falls below this value
        history: If given, the objective of every accepted iterate is appended

    Returns:
        Feasible minimizer estimate
    """
    a = project_simplex(x0)
    value = problem.objective(a)
    if not np.isfinite(value):
        raise NonFiniteObjectiveError("simplex QP objective is not finite at the starting point")
    if history is not None:
        history.append(value)

    curvature = float(np.max(np.abs(np.linalg.eigvalsh(problem.Q)))) if a.size > 1 else 0.0
    step = 1.0 / curvature if curvature > 0 else 1.0

    for iteration in range(max_iter):
        grad = problem.gradient(a)
        if float(np.linalg.norm(a - project_simplex(a - grad))) <= tol:
            break

        # backtrack until the quadratic upper model holds
        while True:
            candidate = project_simplex(a - step * grad)
            move = candidate - a
            candidate_value = problem.objective(candidate)
            if not np.isfinite(candidate_value):
                raise NonFiniteObjectiveError(f"simplex QP objective is not finite at iteration {iteration}")
            if candidate_value <= value + grad @ move + (move @ move) / (2.0 * step) or step < 1e-20:
                break
            step *= 0.5

        if candidate_value > value:
            break
        a, value = candidate, candidate_value
        if history is not None:
            history.append(value)
        if float(move @ move) == 0.0:
            break
        step *= 2.0

    return a


@dataclass(frozen=True)
class SylvesterFactor:
    """Eigendecompositions of P and Q for repeated P A + A Q = R solves."""

    p_values: np.ndarray
    p_vectors: np.ndarray
    q_values: np.ndarray
    q_vectors: np.ndarray
    denominators: np.ndarray


def factor_sylvester(P: np.ndarray, Q: np.ndarray, rho: float = float("nan")) -> SylvesterFactor:
    """Factor the symmetric pair once so later right-hand sides cost two products.

    Args:
        P: Symmetric positive definite N x N matrix
        Q: Symmetric positive semidefinite k x k matrix
        rho: ADMM penalty, only used for diagnostics

    Returns:
        SylvesterFactor holding both eigendecompositions

    Raises:
        FactorizationError: If P is not positive definite or a decomposition fails
    """
    P = 0.5 * (P + P.T)
    Q = 0.5 * (Q + Q.T)
    try:
        p_values, p_vectors = eigh(P)
        q_values, q_vectors = eigh(Q)
    except np.linalg.LinAlgError as e:
        raise FactorizationError(f"eigendecomposition failed: {e}", rho, [np.nan], [np.nan])

    scale = max(1.0, float(np.max(np.abs(p_values))))
    if p_values[0] <= 1e-12 * scale:
        logger.error(f"A-step matrix P is not positive definite (min eigenvalue {p_values[0]:.3e}, rho={rho:g})")
        raise FactorizationError("A-step matrix P is not positive definite; increase rho", rho, p_values, q_values)
    denominators = p_values[:, np.newaxis] + q_values[np.newaxis, :]
    return SylvesterFactor(p_values, p_vectors, q_values, q_vectors, denominators)


def solve_sylvester(P: np.ndarray, Q: np.ndarray, R: np.ndarray,
                    factor: Optional[SylvesterFactor] = None) -> np.ndarray:
    """Solve P A + A Q = R for symmetric P (N x N) and Q (k x k).

    In the eigenbases of P and Q the equation decouples entrywise.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (P.shape[0], Q.shape[0]):
        raise DimensionError(f"R has shape {R.shape}, expected {(P.shape[0], Q.shape[0])}")
    if factor is None:
        factor = factor_sylvester(P, Q)
    transformed = factor.p_vectors.T @ R @ factor.q_vectors
    return factor.p_vectors @ (transformed / factor.denominators) @ factor.q_vectors.T


@dataclass
class ASubproblem:
    """The smooth part of the A-update and its ADMM linear system.

    The smooth objective is
        lambda Tr(A^T K M K A) / 2 + mu Tr(A^T L A) + tau ||S - A X||^2 + zeta ||X - A^T K||^2
    with K the weighted kernel, L its Laplacian and M the symmetrized
    dissimilarity coupling H-bar^T H + H^T H-bar.

    The ADMM penalty actually used is `penalty`: the configured rho times
    the curvature scale 2 (||C||_2 + ||2 tau X X^T||_2), C being `coupling`,
    floored at rho itself. With rho >= 1 this keeps P positive definite
    even when the dissimilarity term is indefinite.
    """

    K_hat: np.ndarray
    K_tilde: np.ndarray
    M_dis: np.ndarray
    S: np.ndarray
    X: np.ndarray
    lam: float
    mu: float
    tau: float
    zeta: float
    rho: float
    _factor: Optional[SylvesterFactor] = field(default=None, repr=False)
    _coupling: Optional[np.ndarray] = field(default=None, repr=False)
    _rhs_base: Optional[np.ndarray] = field(default=None, repr=False)
    _penalty: Optional[float] = field(default=None, repr=False)

    @classmethod
    def build(cls, K_hat, K_tilde, M_dis, S, X, hyper) -> "ASubproblem":
        K_hat = K_hat.values if hasattr(K_hat, "values") else np.asarray(K_hat, dtype=float)
        n_samples = K_hat.shape[0]
        k = X.shape[0]
        for name, matrix, shape in (("K_tilde", K_tilde, (n_samples, n_samples)),
                                    ("M_dis", M_dis, (n_samples, n_samples)),
                                    ("S", S, (n_samples, n_samples)),
                                    ("X", X, (k, n_samples))):
            if matrix.shape != shape:
                raise DimensionError(f"{name} has shape {matrix.shape}, expected {shape}")
        return cls(K_hat, K_tilde, M_dis, S, X, hyper.lam, hyper.mu, hyper.tau, hyper.zeta, hyper.rho)

    def curvature(self) -> float:
        """2 (||C||_2 + ||2 tau X X^T||_2), twice a bound on the Hessian norm."""
        coupling_norm = float(np.max(np.abs(np.linalg.eigvalsh(self.coupling))))
        x_norm = 2.0 * self.tau * float(np.linalg.norm(self.X, 2)) ** 2
        return 2.0 * (coupling_norm + x_norm)

    @property
    def penalty(self) -> float:
        if self._penalty is None:
            self._penalty = self.rho * max(1.0, self.curvature())
        return self._penalty

    @property
    def coupling(self) -> np.ndarray:
        """Left-multiplying part of the gradient, without the ADMM terms."""
        if self._coupling is None:
            K = self.K_hat
            self._coupling = (self.lam * K @ self.M_dis @ K + 2.0 * self.mu * self.K_tilde
                              + 2.0 * self.zeta * K @ K)
        return self._coupling

    def system(self) -> Tuple[np.ndarray, np.ndarray]:
        """(P, Q) of the stationarity equation P A + A Q = R."""
        n_samples = self.K_hat.shape[0]
        P = self.coupling + self.penalty * np.eye(n_samples) + self.penalty * np.ones((n_samples, n_samples))
        Q = 2.0 * self.tau * self.X @ self.X.T
        return P, Q

    def factor(self) -> SylvesterFactor:
        if self._factor is None:
            P, Q = self.system()
            self._factor = factor_sylvester(P, Q, self.penalty)
        return self._factor

    def rhs(self, state: AdmmState) -> np.ndarray:
        n_samples, k = state.A.shape
        ones = np.ones(n_samples)
        if self._rhs_base is None:
            self._rhs_base = 2.0 * self.tau * self.S @ self.X.T + 2.0 * self.zeta * self.K_hat @ self.X.T
        R = self._rhs_base + self.penalty * state.A_plus - state.Delta
        R += np.outer(ones, self.penalty * np.ones(k) - state.delta)
        return R

    def objective(self, A: np.ndarray) -> float:
        KA = self.K_hat @ A
        value = 0.5 * self.lam * np.sum(KA * (self.M_dis @ KA))
        value += self.mu * np.sum(A * (self.K_tilde @ A))
        value += self.tau * np.sum((self.S - A @ self.X) ** 2)
        value += self.zeta * np.sum((self.X - KA.T) ** 2)
        return float(value)

    def gradient(self, A: np.ndarray) -> np.ndarray:
        K = self.K_hat
        grad = self.coupling @ A
        grad += 2.0 * self.tau * (A @ self.X @ self.X.T - self.S @ self.X.T)
        grad -= 2.0 * self.zeta * K @ self.X.T
        return grad

    def lagrangian(self, A: np.ndarray, state: AdmmState) -> float:
        gap = A - state.A_plus
        column_gap = A.sum(axis=0) - 1.0
        return (self.objective(A) + 0.5 * state.rho * np.sum(gap ** 2)
                + 0.5 * state.rho * np.sum(column_gap ** 2)
                + np.sum(state.Delta * gap) + state.delta @ column_gap)

    def lagrangian_gradient(self, A: np.ndarray, state: AdmmState) -> np.ndarray:
        column_gap = A.sum(axis=0) - 1.0
        ones = np.ones(A.shape[0])
        return (self.gradient(A) + state.rho * (A - state.A_plus) + state.Delta
                + np.outer(ones, state.rho * column_gap + state.delta))

    def a_step(self, state: AdmmState) -> np.ndarray:
        """argmin over A of the augmented Lagrangian with A_plus and multipliers fixed."""
        factor = self.factor()
        transformed = factor.p_vectors.T @ self.rhs(state) @ factor.q_vectors
        return factor.p_vectors @ (transformed / factor.denominators) @ factor.q_vectors.T


def admm_update_A(state: AdmmState, K_hat, K_tilde: np.ndarray, M_dis: np.ndarray,
                  S: np.ndarray, X: np.ndarray, hyper) -> AdmmState:
    """Run one ADMM pass on the A-subproblem.

    The pass converges when both primal residuals and the change of A_plus
    between iterations are within hyper.admm_tol. It is declared divergent
    when a residual turns non-finite, or when the residual has grown by more
    than DIVERGENCE_STEP for DIVERGENCE_WINDOW iterations in a row and ends
    DIVERGENCE_FACTOR above the best residual of the pass.

    Args:
        state: Current iterates and multipliers
        K_hat: Weighted kernel (KernelMatrix or array)
        K_tilde: Laplacian of K_hat
        M_dis: H-bar^T H + H^T H-bar
        S: Relaxation matrix, N x N
        X: Embedding slack, k x N
        hyper: Hyperparams providing weights, rho, admm_iters and admm_tol

    Returns:
        The state after at most hyper.admm_iters iterations, carrying the penalty used
    """
    subproblem = ASubproblem.build(K_hat, K_tilde, M_dis, S, X, hyper)
    rho = subproblem.penalty
    state = replace(state, rho=rho)
    A_plus, Delta, delta = state.A_plus, state.Delta, state.delta
    trace = []
    residual_history: List[float] = []
    growing = 0
    converged = False

    iteration = 0
    for iteration in range(1, hyper.admm_iters + 1):
        A = subproblem.a_step(state)
        previous_plus = A_plus
        A_plus = np.maximum(A + Delta / rho, 0.0)
        Delta = Delta + rho * (A - A_plus)
        delta = delta + rho * (A.sum(axis=0) - 1.0)
        state = AdmmState(A=A, A_plus=A_plus, Delta=Delta, delta=delta, rho=rho)

        res_eq, res_pos = state.residuals()
        residual = max(res_eq, res_pos)
        trace.append((iteration, res_eq, res_pos, subproblem.objective(A)))

        if residual_history and residual > residual_history[-1] * (1.0 + DIVERGENCE_STEP):
            growing += 1
        else:
            growing = 0
        residual_history.append(residual)
        if not np.isfinite(residual) or (
                growing >= DIVERGENCE_WINDOW and residual > DIVERGENCE_FACTOR * min(residual_history)):
            logger.error(f"ADMM diverging: residual {residual:.3e} after {iteration} iterations (rho={rho:.3e})")
            raise DivergenceError("ADMM primal residuals kept growing", iteration, residual_history)

        change = float(np.max(np.abs(A_plus - previous_plus)))
        if residual <= hyper.admm_tol and change <= hyper.admm_tol:
            converged = True
            break

    logger.debug(
        f"ADMM {'converged' if converged else 'stopped'} after {iteration} iterations "
        f"(rho {rho:.3e}, eq residual {trace[-1][1]:.2e}, pos residual {trace[-1][2]:.2e})"
    )
    return replace(state, iterations=iteration, converged=converged, trace=tuple(trace))
