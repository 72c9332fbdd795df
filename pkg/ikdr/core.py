"""Core I-KDR model: alternating optimization of the relaxed objective and out-of-sample projection."""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .config import Hyperparams
from .data import Dataset, LabelIndicator, build_label_indicator
from .errors import DimensionError, InputError, NonFiniteObjectiveError, NumericalError
from .kernels import (KernelBundle, KernelMatrix, cross_kernel, gaussian_kernel, laplacian,
                      per_feature_kernels, weighted_kernel)
from .logger import get_logger
from .optim import ASubproblem, AdmmState, QpProblem, admm_update_A, solve_simplex_qp

logger = get_logger(__name__)

MODES = ("single", "multi")


@dataclass(frozen=True)
class RelaxState:
    """Slack variables of the relaxed objective."""

    S: np.ndarray
    X: np.ndarray


@dataclass(frozen=True)
class ObjectiveTerms:
    """Value of every term of the relaxed objective at one point."""

    j_sim_relaxed: float
    j_dis: float
    j_ip_laplacian: float
    s_penalty: float
    x_penalty: float
    total: float

    def as_dict(self) -> Dict[str, float]:
        return {
            "j_sim_relaxed": self.j_sim_relaxed,
            "j_dis": self.j_dis,
            "j_ip_laplacian": self.j_ip_laplacian,
            "s_penalty": self.s_penalty,
            "x_penalty": self.x_penalty,
            "total": self.total,
        }


@dataclass(frozen=True)
class UnrelaxedTerms:
    """Unrelaxed cost terms, reported for diagnostics only."""

    j_ip: float
    j_dis: float
    j_sim: float

    def as_dict(self) -> Dict[str, float]:
        return {"j_ip": self.j_ip, "j_dis": self.j_dis, "j_sim": self.j_sim}


@dataclass(frozen=True)
class EmbeddingModel:
    """A trained I-KDR embedding."""

    A: np.ndarray
    alpha: np.ndarray
    train_features: np.ndarray
    train_labels: np.ndarray
    bandwidths: Tuple[float, ...]
    hyper: Hyperparams
    mode: str = "single"
    class_count: int = 2
    flagged: Tuple[int, ...] = ()
    objective_trace: Tuple[ObjectiveTerms, ...] = ()
    admm_trace: Tuple[Tuple[int, float, float, float], ...] = ()
    # gradient of the last kernel-weight QP at alpha, multi mode only
    alpha_gradient: Tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return self.A.shape[1]

    @property
    def indicator(self) -> LabelIndicator:
        return build_label_indicator(self.train_labels, self.class_count)


def _kernel_values(K: Union[KernelMatrix, np.ndarray]) -> np.ndarray:
    return K.values if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)


def _labels_of(H: LabelIndicator) -> np.ndarray:
    return np.argmax(H.H, axis=0)


def initial_coefficients(n_samples: int, k: int, seed: int) -> np.ndarray:
    """Seeded uniform(0, 1) entries with unit l1-norm columns."""
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.0, 1.0, size=(n_samples, k))
    return A / A.sum(axis=0, keepdims=True)


def finalize_coefficients(A: np.ndarray) -> np.ndarray:
    """Clip at zero and renormalize every column to unit l1-norm."""
    A = np.maximum(A, 0.0)
    sums = A.sum(axis=0)
    empty = sums <= 0.0
    if np.any(empty):
        logger.warning(f"{int(empty.sum())} embedding column(s) vanished after clipping; using uniform weights")
        A[:, empty] = 1.0
        sums = A.sum(axis=0)
    return A / sums


def update_X(A: np.ndarray, K_hat: Union[KernelMatrix, np.ndarray], S: np.ndarray,
             hyper: Hyperparams) -> np.ndarray:
    """X-step.

    By default X = A^T K-hat. With `exact_x_update` X is the exact minimizer
    of tau ||S - A X||^2 + zeta ||X - A^T K-hat||^2.
    """
    K = _kernel_values(K_hat)
    projected = A.T @ K
    if not hyper.exact_x_update:
        return projected
    k = A.shape[1]
    lhs = hyper.tau * A.T @ A + hyper.zeta * np.eye(k)
    rhs = hyper.tau * A.T @ S + hyper.zeta * projected
    return np.linalg.solve(lhs, rhs)


def update_S(A: np.ndarray, X: np.ndarray, H: LabelIndicator, labels: np.ndarray,
             tau: float) -> np.ndarray:
    """S-step: s_i = (u^T u + tau I)^-1 (u^T + tau A x_i) with u the class row of H.

    The inverse only depends on the class, and by the rank-one identity
    equals (I - u^T u / (tau + n_q)) / tau.
    """
    labels = np.asarray(labels, dtype=int)
    AX = A @ X
    S = np.empty_like(AX)
    for q in range(H.H.shape[0]):
        members = np.flatnonzero(labels == q)
        if members.size == 0:
            continue
        u = H.H[q]
        n_q = u @ u
        B = u[:, np.newaxis] + tau * AX[:, members]
        S[:, members] = (B - np.outer(u, u @ B) / (tau + n_q)) / tau
    return S


def build_alpha_qp(A: np.ndarray, X: np.ndarray, bundle: KernelBundle, H: LabelIndicator,
                   hyper: Hyperparams) -> QpProblem:
    """Quadratic program for the kernel weights with A, X and S fixed.

    1/2 alpha^T Q alpha + v^T alpha + zeta ||X||^2 equals the alpha-dependent
    part of the relaxed objective, so Q carries a factor 2.
    """
    stack = bundle.stack
    f = stack.shape[0]
    KA = np.einsum("mij,jk->mik", stack, A)
    dis = H.dissimilarity()
    flat = KA.reshape(f, -1)
    dis_flat = np.einsum("ij,mjk->mik", dis, KA).reshape(f, -1)

    Q = 2.0 * (hyper.lam * flat @ dis_flat.T + hyper.zeta * flat @ flat.T)

    degrees = stack.sum(axis=2)
    laplacian_traces = degrees @ np.sum(A ** 2, axis=1) - np.einsum("mik,ik->m", KA, A)
    coupling = np.einsum("mik,ki->m", KA, X)
    v = hyper.mu * laplacian_traces - 2.0 * hyper.zeta * coupling
    return QpProblem(Q=Q, v=v)


def eval_objective(A: np.ndarray, S: np.ndarray, X: np.ndarray, alpha: np.ndarray,
                   bundle: KernelBundle, H: LabelIndicator, hyper: Hyperparams) -> ObjectiveTerms:
    """Every term of the relaxed objective and their weighted total."""
    K = weighted_kernel(bundle.with_alpha(alpha)).values
    labels = _labels_of(H)
    n_samples = labels.size

    j_sim = float(np.sum(((H.H @ S)[labels, np.arange(n_samples)] - 1.0) ** 2))
    KA = K @ A
    j_dis = float(np.trace(A.T @ K @ H.complement.T @ H.H @ KA))
    j_ip = float(np.sum(A * (laplacian(K) @ A)))
    s_penalty = float(np.sum((S - A @ X) ** 2))
    x_penalty = float(np.sum((X - KA.T) ** 2))
    total = j_sim + hyper.lam * j_dis + hyper.mu * j_ip + hyper.tau * s_penalty + hyper.zeta * x_penalty
    return ObjectiveTerms(j_sim, j_dis, j_ip, s_penalty, x_penalty, total)


def eval_unrelaxed_terms(A: np.ndarray, alpha: np.ndarray, bundle: KernelBundle, H: LabelIndicator,
                     dataset: Optional[Dataset] = None) -> UnrelaxedTerms:
    """The unrelaxed J_Ip (pairwise RKHS distances), J_Dis and J_Sim."""
    K = weighted_kernel(bundle.with_alpha(alpha)).values
    labels = dataset.labels if dataset is not None else _labels_of(H)
    n_samples = K.shape[0]

    diagonal = np.diag(K)
    distances = diagonal[:, np.newaxis] + diagonal[np.newaxis, :] - 2.0 * K
    j_ip = 0.5 * float(np.sum(A * (distances @ A)))

    KA = K @ A
    j_dis = float(np.trace(H.complement.T @ H.H @ KA @ KA.T))

    X = KA.T
    j_sim = float(np.sum(((H.H @ A @ X)[labels, np.arange(n_samples)] - 1.0) ** 2))
    return UnrelaxedTerms(j_ip=j_ip, j_dis=j_dis, j_sim=j_sim)


def _check_finite(terms: ObjectiveTerms, iteration: int) -> None:
    if not np.all(np.isfinite(list(terms.as_dict().values()))):
        logger.error(f"Objective became non-finite at outer iteration {iteration}: {terms.as_dict()}")
        raise NonFiniteObjectiveError(f"objective is not finite at outer iteration {iteration}")


def fit(dataset: Dataset, kernels: Union[KernelBundle, KernelMatrix], hyper: Hyperparams) -> EmbeddingModel:
    """Learn A (and alpha in multi-kernel mode) by alternating X, S, A and alpha steps.

    Args:
        dataset: Training samples and labels
        kernels: A single kernel, or a per-feature bundle for feature selection
        hyper: Weights, penalties and stopping rules

    Returns:
        EmbeddingModel with a feasible A and the objective trace
    """
    if isinstance(kernels, KernelMatrix):
        bundle = KernelBundle.single(kernels, hyper.bandwidth_rule)
    else:
        bundle = kernels
    n_samples = dataset.n_samples
    if bundle.size != n_samples:
        raise DimensionError(f"kernels are {bundle.size} x {bundle.size} but the dataset has {n_samples} samples")
    hyper.validate(n_samples)
    multi = bundle.per_feature and bundle.kernel_count > 1

    indicator = build_label_indicator(dataset.labels, dataset.class_count)
    dis = indicator.dissimilarity()
    M_dis = dis + dis.T

    A = initial_coefficients(n_samples, hyper.k, hyper.seed)
    alpha = bundle.alpha.copy()
    K = weighted_kernel(bundle.with_alpha(alpha))
    S = A @ (A.T @ K.values)
    admm = AdmmState.start(A, hyper.rho)

    trace: List[ObjectiveTerms] = []
    admm_trace: List[Tuple[int, float, float, float]] = []
    previous_total: Optional[float] = None
    alpha_gradient: Tuple[float, ...] = ()

    logger.info(
        f"Fitting I-KDR: N={n_samples}, k={hyper.k}, kernels={bundle.kernel_count}, "
        f"lambda={hyper.lam:g}, mu={hyper.mu:g}, tau={hyper.tau:g}, zeta={hyper.zeta:g}"
    )
    for iteration in range(1, hyper.max_outer + 1):
        K = weighted_kernel(bundle.with_alpha(alpha))
        K_tilde = laplacian(K)

        X = update_X(A, K, S, hyper)
        S = update_S(A, X, indicator, dataset.labels, hyper.tau)

        try:
            candidate = admm_update_A(admm, K, K_tilde, M_dis, S, X, hyper)
        except NumericalError as e:
            e.args = (f"outer iteration {iteration}: {e}",)
            raise
        offset = len(admm_trace)
        admm_trace.extend((offset + i, eq, pos, obj) for i, eq, pos, obj in candidate.trace)

        subproblem = ASubproblem.build(K, K_tilde, M_dis, S, X, hyper)
        current = subproblem.objective(A)
        proposed = subproblem.objective(candidate.A)
        if proposed <= current + 1e-12 * max(1.0, abs(current)):
            A, admm = candidate.A, candidate
        else:
            logger.debug(f"Outer iteration {iteration}: ADMM pass raised the A-objective "
                         f"({current:.6e} -> {proposed:.6e}); keeping the previous A")

        if multi:
            problem = build_alpha_qp(A, X, bundle, indicator, hyper)
            alpha = solve_simplex_qp(problem, alpha, hyper.qp_iters, hyper.qp_tol)
            alpha_gradient = tuple(float(g) for g in problem.gradient(alpha))

        terms = eval_objective(A, S, X, alpha, bundle, indicator, hyper)
        _check_finite(terms, iteration)
        trace.append(terms)
        logger.debug(f"Outer iteration {iteration}: total={terms.total:.8e} "
                     f"(ADMM {candidate.iterations} iterations)")

        if previous_total is not None:
            change = abs(previous_total - terms.total) / max(abs(previous_total), 1e-12)
            if change <= hyper.outer_tol:
                logger.info(f"Converged after {iteration} outer iterations (relative change {change:.2e})")
                break
        previous_total = terms.total
    else:
        logger.info(f"Stopped at max_outer={hyper.max_outer} iterations")

    eq_residual = float(np.max(np.abs(A.sum(axis=0) - 1.0)))
    logger.debug(f"Pre-finalization: max |A^T 1 - 1| = {eq_residual:.2e}, min A = {A.min():.2e}")

    return EmbeddingModel(
        A=finalize_coefficients(A),
        alpha=alpha if multi else np.ones(1),
        train_features=np.array(dataset.features),
        train_labels=np.array(dataset.labels),
        bandwidths=tuple(bundle.bandwidths),
        hyper=hyper,
        mode="multi" if multi else "single",
        class_count=dataset.class_count,
        flagged=tuple(bundle.flagged),
        objective_trace=tuple(trace),
        admm_trace=tuple(admm_trace),
        alpha_gradient=alpha_gradient if multi else (),
    )


def transform(model: EmbeddingModel, test_features: np.ndarray) -> np.ndarray:
    """Embed new samples: X_test = A^T K(train, test), a k x M matrix."""
    test = np.asarray(test_features, dtype=float)
    if test.ndim == 1:
        test = test[np.newaxis, :]
    if test.shape[1] != model.train_features.shape[1]:
        raise DimensionError(
            f"test data has {test.shape[1]} features, the model was trained on {model.train_features.shape[1]}"
        )
    return model.A.T @ cross_kernel(model.train_features, test, model.bandwidths, model.alpha)


def build_kernels(features: np.ndarray, mode: str, rule: str) -> KernelBundle:
    """Training kernels for a mode: one full-feature kernel, or one kernel per feature."""
    if mode == "multi":
        return per_feature_kernels(features, rule)
    if mode == "single":
        return KernelBundle.single(gaussian_kernel(features, rule), rule)
    raise InputError(f"unknown mode '{mode}', expected one of {MODES}")


class IKDR:
    """Estimator wrapper around fit and transform."""

    def __init__(self, hyper: Optional[Hyperparams] = None, mode: str = "single"):
        """Initialize the estimator.

        Args:
            hyper: Hyperparameters, defaults when omitted
            mode: "single" for one Gaussian kernel, "multi" for per-feature kernels
        """
        if mode not in MODES:
            raise InputError(f"unknown mode '{mode}', expected one of {MODES}")
        self.hyper = hyper or Hyperparams()
        self.mode = mode
        self.model_: Optional[EmbeddingModel] = None

    def fit(self, dataset: Dataset) -> "IKDR":
        bundle = build_kernels(dataset.features, self.mode, self.hyper.bandwidth_rule)
        self.model_ = fit(dataset, bundle, self.hyper)
        return self

    def transform(self, features: np.ndarray) -> np.ndarray:
        if self.model_ is None:
            raise InputError("IKDR.transform called before fit")
        return transform(self.model_, features)

    def fit_transform(self, dataset: Dataset) -> np.ndarray:
        return self.fit(dataset).transform(dataset.features)
