"""
Soft-margin SVMs trained in the dual by sequential minimal optimization.

The solver works on

    min  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K_ij

picking the working pair with second-order information and updating the
gradient incrementally, so only two kernel columns are touched per step.
With C = 1 / (lambda n) this is the dual of

    (lambda/2)|w|^2 + (1/n) sum_i hinge(y_i, w . x_i + b).
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from .. import utils
from ..errors import KernelSizeError, NumericalError, TrainingError
from ..features import LabeledMatrix
from .base import (
    FusionModel,
    ModelKind,
    TrainConfig,
    check_training_data,
    frozen,
    signed_labels,
)
from .linear import LinearModel

logger = logging.getLogger(__name__)

# curvature used when a pair's kernel distance is not positive
TAU = 1e-12


def linear_kernel(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.atleast_2d(A) @ np.atleast_2d(B).T


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    sq = (
        np.einsum("ij,ij->i", A, A)[:, None]
        + np.einsum("ij,ij->i", B, B)[None, :]
        - 2.0 * A @ B.T
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def poly_kernel(
    A: np.ndarray, B: np.ndarray, gamma: float, coef0: float, degree: int
) -> np.ndarray:
    return (gamma * linear_kernel(A, B) + coef0) ** degree


def scale_gamma(X: np.ndarray) -> float:
    """1 / (d * Var(X)) over all entries; 1.0 for constant data."""
    variance = float(np.var(X))
    if variance <= 0.0:
        return 1.0
    return 1.0 / (X.shape[1] * variance)


@dataclass
class SmoResult:
    alpha: np.ndarray
    bias: float
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)


def _bias(alpha: np.ndarray, y: np.ndarray, G: np.ndarray, C: float) -> float:
    """Intercept from the free support vectors, else the midpoint of the bounds."""
    yG = y * G
    upper = alpha >= C
    lower = alpha <= 0.0
    free = ~(upper | lower)
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub_mask = (upper & (y < 0)) | (lower & (y > 0))
        lb_mask = (upper & (y > 0)) | (lower & (y < 0))
        ub = float(yG[ub_mask].min()) if ub_mask.any() else np.inf
        lb = float(yG[lb_mask].max()) if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2.0 if np.isfinite(ub + lb) else 0.0
    return -rho


def solve_smo(
    column: Callable[[int], np.ndarray],
    diag: np.ndarray,
    y: np.ndarray,
    C: float,
    tol: float,
    max_iterations: int,
) -> SmoResult:
    """
    Run SMO until the maximal KKT violation drops below ``tol``.

    ``column(i)`` returns the i-th kernel column K[:, i]; ``diag`` is K_ii.
    ``history`` holds the dual objective after every step, which never
    increases.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    history: List[float] = []
    converged = False
    iterations = 0
    while iterations < max_iterations:
        minus_yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        up_idx = np.flatnonzero(up)
        i = int(up_idx[np.argmax(minus_yG[up_idx])])
        g_max = minus_yG[i]
        if g_max - minus_yG[low].min() < tol:
            converged = True
            break

        K_i = column(i)
        cand = np.flatnonzero(low & (minus_yG < g_max))
        gain = g_max - minus_yG[cand]
        curvature = diag[i] + diag[cand] - 2.0 * K_i[cand]
        curvature = np.where(curvature > 0.0, curvature, TAU)
        j = int(cand[np.argmin(-(gain * gain) / curvature)])
        K_j = column(j)

        old_i, old_j = alpha[i], alpha[j]
        quad = diag[i] + diag[j] - 2.0 * K_i[j]
        if quad <= 0.0:
            quad = TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = old_i - old_j
            a_i, a_j = old_i + delta, old_j + delta
            if diff > 0:
                if a_j < 0:
                    a_j, a_i = 0.0, diff
            elif a_i < 0:
                a_i, a_j = 0.0, -diff
            if diff > 0:
                if a_i > C:
                    a_i, a_j = C, C - diff
            elif a_j > C:
                a_j, a_i = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = old_i + old_j
            a_i, a_j = old_i - delta, old_j + delta
            if total > C:
                if a_i > C:
                    a_i, a_j = C, total - C
            elif a_j < 0:
                a_j, a_i = 0.0, total
            if total > C:
                if a_j > C:
                    a_j, a_i = C, total - C
            elif a_i < 0:
                a_i, a_j = 0.0, total

        alpha[i], alpha[j] = a_i, a_j
        G += y * (y[i] * (a_i - old_i) * K_i + y[j] * (a_j - old_j) * K_j)
        iterations += 1
        objective = 0.5 * float(alpha @ (G - 1.0))
        if not np.isfinite(objective):
            raise NumericalError("non-finite SVM dual objective")
        history.append(objective)

    if not converged:
        logger.warning("SMO hit the iteration cap (%d)", max_iterations)
    return SmoResult(alpha, _bias(alpha, y, G, C), iterations, converged, history)


def _box(cfg: TrainConfig, n: int) -> float:
    if cfg.reg_lambda <= 0.0:
        raise TrainingError("SVM training needs reg_lambda > 0")
    return 1.0 / (cfg.reg_lambda * n)


def _cap(cfg: TrainConfig) -> int:
    return cfg.max_iterations if cfg.max_iterations is not None else 2**62


class LinearSvmModel(LinearModel):
    kind = ModelKind.SVM_LINEAR


def _subgradient_svm(
    X: np.ndarray, y: np.ndarray, cfg: TrainConfig
) -> LinearSvmModel:
    """Full-batch subgradient descent, 1/sqrt(t) steps, suffix-averaged iterates."""
    n, d = X.shape
    lam = cfg.reg_lambda
    epochs = cfg.max_iterations or 50000

    def objective(w: np.ndarray, b: float) -> float:
        hinge = np.maximum(0.0, 1.0 - y * (X @ w + b))
        return float(0.5 * lam * w @ w + hinge.mean())

    w, b = np.zeros(d), 0.0
    avg_w, avg_b, averaged = np.zeros(d), 0.0, 0
    best = (objective(w, b), w.copy(), b)
    history = [best[0]]
    for t in range(1, epochs + 1):
        active = y * (X @ w + b) < 1.0
        grad_w = lam * w - (y[active] @ X[active]) / n
        grad_b = -float(y[active].sum()) / n
        step = 1.0 / np.sqrt(t)
        w = w - step * grad_w
        b = b - step * grad_b
        if t > epochs // 2:
            averaged += 1
            avg_w += (w - avg_w) / averaged
            avg_b += (b - avg_b) / averaged
        value = objective(w, b)
        if not np.isfinite(value):
            raise NumericalError("non-finite hinge objective")
        if value < best[0]:
            best = (value, w.copy(), b)
        history.append(best[0])
    if averaged and objective(avg_w, avg_b) < best[0]:
        best = (objective(avg_w, avg_b), avg_w, avg_b)
        history.append(best[0])
    model = LinearSvmModel(cfg, best[1], best[2])
    model.history = history
    return model


def train_svm_linear(data: LabeledMatrix, cfg: TrainConfig) -> LinearSvmModel:
    check_training_data(data)
    started = time.monotonic()
    X = data.rows
    y = signed_labels(data.labels)
    if cfg.linear_svm_solver == "subgradient":
        model = _subgradient_svm(X, y, cfg)
    else:
        result = solve_smo(
            lambda i: X @ X[i],
            np.einsum("ij,ij->i", X, X),
            y,
            _box(cfg, data.n),
            cfg.kkt_tol,
            _cap(cfg),
        )
        coef = (result.alpha * y) @ X
        model = LinearSvmModel(cfg, coef, result.bias)
        model.history = result.history
    logger.info(
        "Trained linear SVM (%s) on %d x %d (%s)",
        cfg.linear_svm_solver,
        data.n,
        data.dim,
        utils.format_seconds(time.monotonic() - started),
    )
    return model


class KernelSvmModel(FusionModel):
    """Scores ``sum_i a_i y_i k(x_i, x) + b`` over the support vectors."""

    kind = ModelKind.SVM_RBF

    def __init__(
        self,
        config: TrainConfig,
        support_vectors: np.ndarray,
        dual_coef: np.ndarray,
        intercept: float,
        gamma: float,
    ):
        super().__init__(config, support_vectors.shape[1])
        self.support_vectors = frozen(support_vectors)
        self.dual_coef = frozen(dual_coef)
        self.intercept = float(intercept)
        self.gamma = float(gamma)

    def kernel(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return rbf_kernel(A, B, self.gamma)

    def _decision(self, X: np.ndarray) -> np.ndarray:
        if self.dual_coef.shape[0] == 0:
            return np.full(X.shape[0], self.intercept)
        return self.kernel(X, self.support_vectors) @ self.dual_coef + self.intercept

    def arrays(self) -> Dict[str, np.ndarray]:
        return {
            "support_vectors": self.support_vectors,
            "dual_coef": self.dual_coef,
            "intercept": np.array([self.intercept]),
            "gamma": np.array([self.gamma]),
        }

    @classmethod
    def from_arrays(
        cls, config: TrainConfig, feature_dim: int, arrays: Dict[str, np.ndarray]
    ) -> "KernelSvmModel":
        support = np.asarray(arrays["support_vectors"]).reshape(-1, feature_dim)
        return cls(
            config,
            support,
            arrays["dual_coef"],
            float(arrays["intercept"][0]),
            float(arrays["gamma"][0]),
        )


class RbfSvmModel(KernelSvmModel):
    kind = ModelKind.SVM_RBF


class PolySvmModel(KernelSvmModel):
    kind = ModelKind.SVM_POLY

    def kernel(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return poly_kernel(A, B, self.gamma, self.config.coef0, self.config.degree)


def kernel_matrix(model: KernelSvmModel, X: np.ndarray, limit: int) -> np.ndarray:
    n = X.shape[0]
    needed = n * n * 8
    if needed > limit:
        raise KernelSizeError(
            f"kernel matrix for n={n} needs {needed} bytes, limit is {limit}"
        )
    try:
        return model.kernel(X, X)
    except MemoryError:
        raise KernelSizeError(
            f"could not allocate the {n}x{n} kernel matrix ({needed} bytes)"
        ) from None


def train_svm_kernel(data: LabeledMatrix, cfg: TrainConfig) -> KernelSvmModel:
    if cfg.kind not in (ModelKind.SVM_RBF, ModelKind.SVM_POLY):
        raise TrainingError(f"kernel SVM cannot train kind '{cfg.kind.value}'")
    check_training_data(data)
    started = time.monotonic()
    X = data.rows
    y = signed_labels(data.labels)
    gamma = cfg.gamma if cfg.gamma is not None else scale_gamma(X)
    model_cls = RbfSvmModel if cfg.kind is ModelKind.SVM_RBF else PolySvmModel
    # template instance, used only for its kernel
    probe = model_cls(cfg, X[:0], np.zeros(0), 0.0, gamma)
    K = kernel_matrix(probe, X, cfg.max_kernel_bytes)
    if not np.all(np.isfinite(K)):
        raise NumericalError("non-finite kernel values")
    result = solve_smo(
        lambda i: K[:, i],
        np.diag(K).copy(),
        y,
        _box(cfg, data.n),
        cfg.kkt_tol,
        _cap(cfg),
    )
    support = result.alpha > 0.0
    model = model_cls(
        cfg, X[support], (result.alpha * y)[support], result.bias, gamma
    )
    model.history = result.history
    logger.info(
        "Trained %s on %d x %d: %d support vectors, %d SMO steps (%s)",
        cfg.kind.value,
        data.n,
        data.dim,
        int(support.sum()),
        result.iterations,
        utils.format_seconds(time.monotonic() - started),
    )
    return model
