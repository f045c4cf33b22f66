"""
Random Fourier features: standardize, project with PCA, map through
``z(x) = sqrt(2/D) cos(Wx + beta)`` and fit a logistic regression on ``z``.

With W rows drawn from N(0, 2 gamma I) and beta from U[0, 2 pi), ``z(x) . z(y)``
approximates the RBF kernel ``exp(-gamma |x - y|^2)``.
"""

import logging
import time
from typing import Dict, Tuple

import numpy as np

from .. import utils
from ..features import LabeledMatrix, PcaModel, ScalerModel, fit_pca, fit_scaler
from .base import (
    FusionModel,
    ModelKind,
    TrainConfig,
    check_training_data,
    frozen,
    signed_labels,
)
from .linear import fit_logistic
from .svm import scale_gamma

logger = logging.getLogger(__name__)


def random_fourier_map(
    input_dim: int, n_features: int, gamma: float, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Draw ``(W, beta)`` with W of shape (n_features, input_dim)."""
    W = rng.normal(0.0, np.sqrt(2.0 * gamma), size=(n_features, input_dim))
    beta = rng.uniform(0.0, 2.0 * np.pi, size=n_features)
    return W, beta


def rff_transform(X: np.ndarray, W: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return np.sqrt(2.0 / W.shape[0]) * np.cos(np.atleast_2d(X) @ W.T + beta)


class RffModel(FusionModel):
    kind = ModelKind.RFF_LOGREG

    def __init__(
        self,
        config: TrainConfig,
        scaler: ScalerModel,
        pca: PcaModel,
        W: np.ndarray,
        beta: np.ndarray,
        coef: np.ndarray,
        intercept: float,
    ):
        super().__init__(config, scaler.mean.shape[0])
        self.scaler = ScalerModel(frozen(scaler.mean), frozen(scaler.stddev))
        self.pca = PcaModel(
            frozen(pca.mean), frozen(pca.components), frozen(pca.explained_variance)
        )
        self.W = frozen(W)
        self.beta = frozen(beta)
        self.coef = frozen(coef)
        self.intercept = float(intercept)

    def features(self, X: np.ndarray) -> np.ndarray:
        return rff_transform(self.pca.apply(self.scaler.apply(X)), self.W, self.beta)

    def _decision(self, X: np.ndarray) -> np.ndarray:
        return self.features(X) @ self.coef + self.intercept

    def arrays(self) -> Dict[str, np.ndarray]:
        return {
            "scaler_mean": self.scaler.mean,
            "scaler_stddev": self.scaler.stddev,
            "pca_mean": self.pca.mean,
            "pca_components": self.pca.components,
            "pca_variance": self.pca.explained_variance,
            "W": self.W,
            "beta": self.beta,
            "coef": self.coef,
            "intercept": np.array([self.intercept]),
        }

    @classmethod
    def from_arrays(
        cls, config: TrainConfig, feature_dim: int, arrays: Dict[str, np.ndarray]
    ) -> "RffModel":
        return cls(
            config,
            ScalerModel(arrays["scaler_mean"], arrays["scaler_stddev"]),
            PcaModel(
                arrays["pca_mean"], arrays["pca_components"], arrays["pca_variance"]
            ),
            arrays["W"],
            arrays["beta"],
            arrays["coef"],
            float(arrays["intercept"][0]),
        )


def train_rff_logreg(data: LabeledMatrix, cfg: TrainConfig) -> RffModel:
    check_training_data(data)
    started = time.monotonic()
    scaler = fit_scaler(data.rows)
    scaled = scaler.apply(data.rows)

    k = min(cfg.pca_dim, data.n, data.dim)
    if k < cfg.pca_dim:
        logger.warning(
            "pca_dim %d clipped to %d (n=%d, d=%d)", cfg.pca_dim, k, data.n, data.dim
        )
    pca = fit_pca(scaled, k)
    projected = pca.apply(scaled)

    gamma = cfg.gamma if cfg.gamma is not None else scale_gamma(projected)
    rng = np.random.default_rng(cfg.seed)
    W, beta = random_fourier_map(k, cfg.rff_dim, gamma, rng)
    coef, intercept, history = fit_logistic(
        rff_transform(projected, W, beta),
        signed_labels(data.labels),
        cfg.reg_lambda,
        cfg.max_iterations,
        cfg.grad_tol,
    )
    model = RffModel(cfg, scaler, pca, W, beta, coef, intercept)
    model.history = history
    logger.info(
        "Trained RFF logreg: %d -> PCA %d -> %d features, gamma %.4g (%s)",
        data.dim,
        k,
        cfg.rff_dim,
        gamma,
        utils.format_seconds(time.monotonic() - started),
    )
    return model
