"""
Fusion back-ends behind one train/score interface.

``train(data, cfg)`` dispatches on ``cfg.kind``; every returned model supports
``score`` / ``score_batch`` and FMD1 persistence.
"""

from typing import Callable, Dict, Optional

from ..features import LabeledMatrix
from .base import (
    DEFAULT_LAMBDA,
    KIND_DEFAULTS,
    FusionModel,
    ModelKind,
    TrainConfig,
    score,
)
from .forest import train_random_forest
from .gbdt import train_gbdt
from .gmm import train_gmm_llr
from .linear import train_logreg
from .mlp import train_mlp
from .persistence import dumps_model, load_model, loads_model, save_model
from .rff import train_rff_logreg
from .svm import train_svm_kernel, train_svm_linear

Trainer = Callable[[LabeledMatrix, TrainConfig, Optional[int]], FusionModel]


def _serial(fn: Callable[[LabeledMatrix, TrainConfig], FusionModel]) -> Trainer:
    return lambda data, cfg, threads: fn(data, cfg)


TRAINERS: Dict[ModelKind, Trainer] = {
    ModelKind.MLP: _serial(train_mlp),
    ModelKind.LOGREG: _serial(train_logreg),
    ModelKind.SVM_LINEAR: _serial(train_svm_linear),
    ModelKind.SVM_RBF: _serial(train_svm_kernel),
    ModelKind.SVM_POLY: _serial(train_svm_kernel),
    ModelKind.RFF_LOGREG: _serial(train_rff_logreg),
    ModelKind.GMM: _serial(train_gmm_llr),
    ModelKind.RANDOM_FOREST: train_random_forest,
    ModelKind.GBDT: train_gbdt,
}


def train(
    data: LabeledMatrix, cfg: TrainConfig, threads: Optional[int] = None
) -> FusionModel:
    """Train the back-end named by ``cfg.kind``; ``threads`` never changes results."""
    return TRAINERS[cfg.kind](data, cfg, threads)


__all__ = [
    "DEFAULT_LAMBDA",
    "KIND_DEFAULTS",
    "FusionModel",
    "ModelKind",
    "TrainConfig",
    "TRAINERS",
    "dumps_model",
    "load_model",
    "loads_model",
    "save_model",
    "score",
    "train",
]
