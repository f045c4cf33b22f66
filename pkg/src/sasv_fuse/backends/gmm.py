"""
Generative back-end: one diagonal-covariance GMM per class, fit by EM, scored
by the log-likelihood ratio log p(x | positive) - log p(x | negative).
"""

import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from scipy.special import logsumexp

from .. import utils
from ..errors import NumericalError, TrainingError
from ..features import LabeledMatrix
from .base import FusionModel, ModelKind, TrainConfig, check_training_data, frozen

logger = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class DiagonalGmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def n_components(self) -> int:
        return int(self.weights.shape[0])

    def component_log_density(self, X: np.ndarray) -> np.ndarray:
        """log w_k + log N(x; mu_k, diag var_k), shape (n, K)."""
        X = np.atleast_2d(X)
        out = np.empty((X.shape[0], self.n_components))
        for k in range(self.n_components):
            centered = X - self.means[k]
            out[:, k] = -0.5 * (
                np.sum(centered * centered / self.variances[k], axis=1)
                + np.sum(np.log(self.variances[k]))
                + X.shape[1] * _LOG_2PI
            )
        return out + np.log(self.weights)

    def log_density(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(logsumexp(self.component_log_density(X), axis=1))


def e_step(gmm: DiagonalGmm, X: np.ndarray) -> Tuple[np.ndarray, float]:
    """Responsibilities (rows sum to one) and the mean log-likelihood."""
    weighted = gmm.component_log_density(X)
    per_sample = logsumexp(weighted, axis=1)
    resp = np.exp(weighted - per_sample[:, None])
    return resp, float(np.mean(per_sample))


def m_step(X: np.ndarray, resp: np.ndarray, floor: float) -> DiagonalGmm:
    nk = np.maximum(resp.sum(axis=0), 10.0 * np.finfo(np.float64).eps)
    means = (resp.T @ X) / nk[:, None]
    variances = np.empty_like(means)
    for k in range(resp.shape[1]):
        centered = X - means[k]
        variances[k] = (resp[:, k] @ (centered * centered)) / nk[k]
    return DiagonalGmm(nk / nk.sum(), means, np.maximum(variances, floor))


def fit_diagonal_gmm(
    X: np.ndarray,
    n_components: int,
    max_iterations: int,
    tol: float,
    floor: float,
    rng: np.random.Generator,
) -> Tuple[DiagonalGmm, List[float]]:
    """
    EM from means at randomly chosen samples, the sample variance and uniform
    weights. Returns the model and the mean log-likelihood after each E-step.
    """
    n = X.shape[0]
    start = rng.choice(n, size=n_components, replace=False)
    gmm = DiagonalGmm(
        np.full(n_components, 1.0 / n_components),
        X[np.sort(start)].copy(),
        np.tile(np.maximum(X.var(axis=0), floor), (n_components, 1)),
    )
    resp, log_likelihood = e_step(gmm, X)
    history = [log_likelihood]
    for _ in range(max_iterations):
        gmm = m_step(X, resp, floor)
        resp, current = e_step(gmm, X)
        if not np.isfinite(current):
            raise NumericalError("non-finite GMM log-likelihood")
        history.append(current)
        if current - log_likelihood < tol:
            break
        log_likelihood = current
    else:
        logger.warning("GMM EM hit the iteration cap (%d)", max_iterations)
    return gmm, history


def _frozen_gmm(gmm: DiagonalGmm) -> DiagonalGmm:
    return DiagonalGmm(frozen(gmm.weights), frozen(gmm.means), frozen(gmm.variances))


class GmmModel(FusionModel):
    kind = ModelKind.GMM

    def __init__(
        self, config: TrainConfig, positive: DiagonalGmm, negative: DiagonalGmm
    ):
        super().__init__(config, positive.means.shape[1])
        self.positive = _frozen_gmm(positive)
        self.negative = _frozen_gmm(negative)
        self.traces: Dict[str, List[float]] = {"positive": [], "negative": []}

    def _decision(self, X: np.ndarray) -> np.ndarray:
        return self.positive.log_density(X) - self.negative.log_density(X)

    def arrays(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for side, gmm in (("pos", self.positive), ("neg", self.negative)):
            out[f"{side}_weights"] = gmm.weights
            out[f"{side}_means"] = gmm.means
            out[f"{side}_variances"] = gmm.variances
        return out

    @classmethod
    def from_arrays(
        cls, config: TrainConfig, feature_dim: int, arrays: Dict[str, np.ndarray]
    ) -> "GmmModel":
        def side(prefix: str) -> DiagonalGmm:
            return DiagonalGmm(
                arrays[f"{prefix}_weights"],
                arrays[f"{prefix}_means"].reshape(-1, feature_dim),
                arrays[f"{prefix}_variances"].reshape(-1, feature_dim),
            )

        return cls(config, side("pos"), side("neg"))


def train_gmm_llr(data: LabeledMatrix, cfg: TrainConfig) -> GmmModel:
    check_training_data(data)
    started = time.monotonic()
    rng = np.random.default_rng(cfg.seed)
    max_iterations = cfg.max_iterations if cfg.max_iterations is not None else 2**62
    fitted: Dict[str, Tuple[DiagonalGmm, List[float]]] = {}
    for name, label in (("positive", 1), ("negative", 0)):
        X = data.rows[data.labels == label]
        if X.shape[0] < cfg.n_components:
            raise TrainingError(
                f"degenerate {name} class: {X.shape[0]} samples for "
                f"{cfg.n_components} components"
            )
        fitted[name] = fit_diagonal_gmm(
            X, cfg.n_components, max_iterations, cfg.em_tol, cfg.covariance_floor, rng
        )
    model = GmmModel(cfg, fitted["positive"][0], fitted["negative"][0])
    model.traces = {name: trace for name, (_, trace) in fitted.items()}
    model.history = model.traces["positive"]
    logger.info(
        "Trained GMM LLR (%d components, %d/%d EM iterations) in %s",
        cfg.n_components,
        len(model.traces["positive"]) - 1,
        len(model.traces["negative"]) - 1,
        utils.format_seconds(time.monotonic() - started),
    )
    return model
