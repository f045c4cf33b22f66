"""
L2-regularized logistic regression, the linear back-end shared by the
score-fusion stage and the random-Fourier-feature pipeline.
"""

import logging
import time
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .. import utils
from ..errors import NumericalError
from ..features import LabeledMatrix
from .base import (
    FusionModel,
    ModelKind,
    TrainConfig,
    check_training_data,
    frozen,
    signed_labels,
)

logger = logging.getLogger(__name__)

# scipy wants a finite iteration cap; "unlimited" maps onto this
UNLIMITED_ITERATIONS = 10**9


def logistic_objective(
    params: np.ndarray, X: np.ndarray, y: np.ndarray, reg_lambda: float
) -> Tuple[float, np.ndarray]:
    """
    Mean logistic loss plus (lambda/2)|w|^2 and its gradient.

    ``params`` is ``w`` followed by the intercept ``b``; ``y`` holds -1/+1.
    The intercept is not penalized.
    """
    w, b = params[:-1], params[-1]
    margins = y * (X @ w + b)
    loss = float(np.mean(np.logaddexp(0.0, -margins)) + 0.5 * reg_lambda * w @ w)
    # d/dm log(1 + exp(-y m)) = -y * sigmoid(-y m)
    slope = -y * expit(-margins) / X.shape[0]
    grad = np.empty_like(params)
    grad[:-1] = X.T @ slope + reg_lambda * w
    grad[-1] = slope.sum()
    return loss, grad


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    reg_lambda: float,
    max_iterations: Optional[int],
    grad_tol: float,
) -> Tuple[np.ndarray, float, List[float]]:
    """Minimize the logistic objective with L-BFGS-B; returns (w, b, history)."""
    history: List[float] = []

    def objective(params: np.ndarray) -> Tuple[float, np.ndarray]:
        loss, grad = logistic_objective(params, X, y, reg_lambda)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise NumericalError("non-finite logistic loss")
        return loss, grad

    def record(params: np.ndarray) -> None:
        history.append(logistic_objective(params, X, y, reg_lambda)[0])

    cap = UNLIMITED_ITERATIONS if max_iterations is None else max_iterations
    result = minimize(
        objective,
        np.zeros(X.shape[1] + 1),
        jac=True,
        method="L-BFGS-B",
        callback=record,
        options={
            "maxiter": cap,
            "maxfun": max(cap, 15000),
            "gtol": grad_tol,
            "ftol": 0.0,
        },
    )
    if result.nit >= cap:
        logger.warning("Logistic regression hit the iteration cap (%d)", cap)
    params = np.asarray(result.x, dtype=np.float64)
    if not np.all(np.isfinite(params)):
        raise NumericalError("non-finite logistic regression parameters")
    return params[:-1].copy(), float(params[-1]), history


class LinearModel(FusionModel):
    """Scores ``w . x + b``."""

    kind = ModelKind.LOGREG

    def __init__(self, config: TrainConfig, coef: np.ndarray, intercept: float):
        coef = frozen(np.asarray(coef).reshape(-1))
        super().__init__(config, coef.shape[0])
        self.coef = coef
        self.intercept = float(intercept)

    def _decision(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coef + self.intercept

    def arrays(self) -> Dict[str, np.ndarray]:
        return {"coef": self.coef, "intercept": np.array([self.intercept])}

    @classmethod
    def from_arrays(
        cls, config: TrainConfig, feature_dim: int, arrays: Dict[str, np.ndarray]
    ) -> "LinearModel":
        return cls(config, arrays["coef"], float(arrays["intercept"][0]))


class LogisticModel(LinearModel):
    kind = ModelKind.LOGREG


def train_logreg(data: LabeledMatrix, cfg: TrainConfig) -> LogisticModel:
    check_training_data(data)
    started = time.monotonic()
    coef, intercept, history = fit_logistic(
        data.rows,
        signed_labels(data.labels),
        cfg.reg_lambda,
        cfg.max_iterations,
        cfg.grad_tol,
    )
    model = LogisticModel(cfg, coef, intercept)
    model.history = history
    logger.info(
        "Trained logreg on %d x %d in %d iterations (%s)",
        data.n,
        data.dim,
        len(history),
        utils.format_seconds(time.monotonic() - started),
    )
    return model
