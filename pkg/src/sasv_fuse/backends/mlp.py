"""
Feed-forward network ``d -> layer_sizes -> 1`` with LeakyReLU after each
hidden layer, trained on the logistic loss by mini-batch SGD with momentum.
The score is the pre-sigmoid output.
"""

import logging
import time
from typing import Dict, List, Sequence, Tuple

import numpy as np
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

Layer = Tuple[np.ndarray, np.ndarray]


def leaky_relu(x: np.ndarray, negative_slope: float) -> np.ndarray:
    return np.where(x > 0, x, negative_slope * x)


def init_layers(sizes: Sequence[int], rng: np.random.Generator) -> List[Layer]:
    """Weights and biases uniform in +-1/sqrt(fan_in), one pair per layer."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append((W, b))
    return layers


def forward(
    layers: Sequence[Layer], X: np.ndarray, negative_slope: float
) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
    """
    Returns ``(output, hidden, pre_activations)``; ``hidden`` holds the
    post-activation output of every hidden layer.
    """
    h = np.atleast_2d(X)
    hidden: List[np.ndarray] = []
    pre: List[np.ndarray] = []
    for W, b in layers[:-1]:
        z = h @ W + b
        pre.append(z)
        h = leaky_relu(z, negative_slope)
        hidden.append(h)
    W, b = layers[-1]
    return (h @ W + b).reshape(-1), hidden, pre


def mlp_loss_and_grads(
    layers: Sequence[Layer],
    X: np.ndarray,
    y: np.ndarray,
    reg_lambda: float,
    negative_slope: float,
) -> Tuple[float, List[Layer]]:
    """Mean logistic loss (y in -1/+1) plus (lambda/2) sum |W|^2, by backprop."""
    output, hidden, pre = forward(layers, X, negative_slope)
    margins = y * output
    loss = float(np.mean(np.logaddexp(0.0, -margins)))
    loss += 0.5 * reg_lambda * sum(float(np.sum(W * W)) for W, _ in layers)

    delta = (-y * expit(-margins) / X.shape[0]).reshape(-1, 1)
    inputs = [np.atleast_2d(X)] + hidden
    grads: List[Layer] = []
    for index in range(len(layers) - 1, -1, -1):
        W, _ = layers[index]
        grads.append((inputs[index].T @ delta + reg_lambda * W, delta.sum(axis=0)))
        if index:
            slope = np.where(pre[index - 1] > 0, 1.0, negative_slope)
            delta = (delta @ W.T) * slope
    grads.reverse()
    return loss, grads


class MlpModel(FusionModel):
    kind = ModelKind.MLP

    def __init__(self, config: TrainConfig, layers: Sequence[Layer]):
        super().__init__(config, layers[0][0].shape[0])
        self.layers = [(frozen(W), frozen(b)) for W, b in layers]

    def _decision(self, X: np.ndarray) -> np.ndarray:
        return forward(self.layers, X, self.config.negative_slope)[0]

    def arrays(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for k, (W, b) in enumerate(self.layers):
            out[f"W{k}"] = W
            out[f"b{k}"] = b
        return out

    @classmethod
    def from_arrays(
        cls, config: TrainConfig, feature_dim: int, arrays: Dict[str, np.ndarray]
    ) -> "MlpModel":
        n_layers = sum(1 for name in arrays if name.startswith("W"))
        layers = [(arrays[f"W{k}"], arrays[f"b{k}"]) for k in range(n_layers)]
        return cls(config, layers)


def train_mlp(data: LabeledMatrix, cfg: TrainConfig) -> MlpModel:
    check_training_data(data)
    started = time.monotonic()
    rng = np.random.default_rng(cfg.seed)
    X = data.rows
    y = signed_labels(data.labels)
    layers = init_layers([data.dim, *cfg.layer_sizes, 1], rng)
    velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
    history: List[float] = []

    for _ in range(cfg.epochs):
        order = rng.permutation(data.n)
        for start in range(0, data.n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grads = mlp_loss_and_grads(
                layers, X[batch], y[batch], cfg.reg_lambda, cfg.negative_slope
            )
            updated = []
            for (W, b), (vW, vb), (gW, gb) in zip(layers, velocity, grads):
                vW = cfg.momentum * vW + gW
                vb = cfg.momentum * vb + gb
                step = cfg.learning_rate
                updated.append(((W - step * vW, b - step * vb), (vW, vb)))
            layers = [layer for layer, _ in updated]
            velocity = [v for _, v in updated]
        loss, _ = mlp_loss_and_grads(layers, X, y, cfg.reg_lambda, cfg.negative_slope)
        if not np.isfinite(loss):
            raise NumericalError("non-finite MLP loss")
        history.append(loss)

    model = MlpModel(cfg, layers)
    model.history = history
    logger.info(
        "Trained MLP %s for %d epochs, final loss %.6f (%s)",
        "-".join(str(s) for s in (data.dim, *cfg.layer_sizes, 1)),
        cfg.epochs,
        history[-1],
        utils.format_seconds(time.monotonic() - started),
    )
    return model
