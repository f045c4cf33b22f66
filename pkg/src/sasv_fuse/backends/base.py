"""
Shared pieces of the fusion back-ends: the model kinds, the training
configuration with per-kind defaults, and the ``FusionModel`` interface.
"""

from abc import ABC, abstractmethod
from enum import Enum
from typing import Any, ClassVar, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    model_validator,
)
from typing_extensions import Self

from ..errors import TrainingError
from ..features import LabeledMatrix

# Utterances in the ASVspoof 2019 LA train partition; the default
# regularization weight is 1/m.
TRAIN_UTTERANCES = 25380
DEFAULT_LAMBDA = 1.0 / TRAIN_UTTERANCES


class ModelKind(str, Enum):
    MLP = "mlp"
    LOGREG = "logreg"
    SVM_LINEAR = "svm_linear"
    SVM_RBF = "svm_rbf"
    SVM_POLY = "svm_poly"
    RFF_LOGREG = "rff_logreg"
    GMM = "gmm"
    RANDOM_FOREST = "random_forest"
    GBDT = "gbdt"


# Per-kind published settings; everything else falls back to the field
# defaults of TrainConfig.
KIND_DEFAULTS: Dict[ModelKind, Dict[str, Any]] = {
    ModelKind.MLP: {"max_iterations": None, "learning_rate": 1e-3},
    ModelKind.LOGREG: {"max_iterations": 1000},
    ModelKind.SVM_LINEAR: {"max_iterations": 50000},
    ModelKind.SVM_RBF: {"max_iterations": 50000},
    ModelKind.SVM_POLY: {"max_iterations": 50000, "degree": 7},
    ModelKind.RFF_LOGREG: {"max_iterations": 50000},
    ModelKind.GMM: {"max_iterations": 1000},
    ModelKind.RANDOM_FOREST: {"n_trees": 1000, "max_depth": None},
    ModelKind.GBDT: {"n_trees": 700, "max_depth": 6, "learning_rate": 0.03},
}


class TrainConfig(BaseModel):
    """Hyperparameters of one back-end. Unset fields take the kind's default."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ModelKind
    max_iterations: Optional[PositiveInt] = None
    reg_lambda: NonNegativeFloat = DEFAULT_LAMBDA
    seed: int = Field(default=0, ge=0, lt=2**64)

    # SVMs
    degree: PositiveInt = 7
    gamma: Optional[PositiveFloat] = None
    coef0: float = 0.0
    kkt_tol: PositiveFloat = 1e-3
    max_kernel_bytes: PositiveInt = 2 * 1024**3
    linear_svm_solver: Literal["dual", "subgradient"] = "dual"

    # logistic objectives
    grad_tol: PositiveFloat = 1e-8

    # RFF
    rff_dim: PositiveInt = 5000
    pca_dim: PositiveInt = 1024

    # GMM
    n_components: PositiveInt = 2
    em_tol: PositiveFloat = 1e-7
    covariance_floor: PositiveFloat = 1e-6

    # trees
    n_trees: int = 1000
    max_depth: Optional[PositiveInt] = None
    max_features: Union[Literal["sqrt", "all"], PositiveInt] = "sqrt"
    bootstrap: bool = True
    learning_rate: PositiveFloat = 0.03
    l2_leaf_reg: NonNegativeFloat = 3.0
    border_count: PositiveInt = 254
    subsample: PositiveFloat = 1.0

    # MLP
    layer_sizes: Tuple[PositiveInt, ...] = (256, 128, 64)
    negative_slope: NonNegativeFloat = 0.3
    momentum: NonNegativeFloat = 0.9
    batch_size: PositiveInt = 256
    epochs: PositiveInt = 100

    @model_validator(mode="before")
    @classmethod
    def _kind_defaults(cls, data: Any) -> Any:
        if isinstance(data, dict) and "kind" in data:
            try:
                kind = ModelKind(data["kind"])
            except ValueError:
                return data
            merged = dict(KIND_DEFAULTS[kind])
            merged.update(data)
            return merged
        return data

    @model_validator(mode="after")
    def _check_ranges(self) -> Self:
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if self.subsample > 1.0:
            raise ValueError("subsample must be in (0, 1]")
        return self

    @classmethod
    def for_kind(cls, kind: Union[str, ModelKind], **overrides: Any) -> "TrainConfig":
        return cls.model_validate({"kind": ModelKind(kind), **overrides})

    def echo(self) -> Dict[str, Any]:
        """JSON-ready dump used in model files and run manifests."""
        return self.model_dump(mode="json")


def check_training_data(data: LabeledMatrix, min_per_class: int = 1) -> None:
    if data.n == 0:
        raise TrainingError("empty training data")
    if not np.all(np.isfinite(data.rows)):
        raise TrainingError("training matrix holds non-finite values")
    positives = int(np.count_nonzero(data.labels == 1))
    negatives = data.n - positives
    if positives == 0 or negatives == 0:
        raise TrainingError(
            f"training data needs both classes (positive={positives}, "
            f"negative={negatives})"
        )
    if min(positives, negatives) < min_per_class:
        raise TrainingError(
            f"each class needs at least {min_per_class} samples "
            f"(positive={positives}, negative={negatives})"
        )


def signed_labels(labels: np.ndarray) -> np.ndarray:
    """0/1 labels as -1/+1 floats."""
    return np.where(np.asarray(labels) == 1, 1.0, -1.0)


class FusionModel(ABC):
    """
    A trained back-end. ``score`` maps a feature vector to a real number,
    higher meaning more target-bonafide-like. Scoring never mutates the model.
    """

    kind: ClassVar[ModelKind]

    def __init__(self, config: TrainConfig, feature_dim: int):
        self.config = config
        self.feature_dim = int(feature_dim)
        # per-iteration training trace (objective, log-likelihood, loss, ...)
        self.history: List[float] = []

    @abstractmethod
    def _decision(self, X: np.ndarray) -> np.ndarray:
        """Scores for a validated (n, feature_dim) float64 matrix."""

    @abstractmethod
    def arrays(self) -> Dict[str, np.ndarray]:
        """Trained state as named arrays, for persistence."""

    @classmethod
    @abstractmethod
    def from_arrays(
        cls, config: TrainConfig, feature_dim: int, arrays: Dict[str, np.ndarray]
    ) -> Self:
        """Rebuild a model saved with ``arrays``."""

    def _validated(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.feature_dim:
            raise TrainingError(
                f"{self.kind.value} model expects dim {self.feature_dim}, "
                f"got {X.shape[-1]}"
            )
        if not np.all(np.isfinite(X)):
            raise TrainingError("cannot score non-finite features")
        return X

    def score_batch(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self._decision(self._validated(X)), dtype=np.float64)

    def score(self, x: np.ndarray) -> float:
        return float(self.score_batch(np.asarray(x).reshape(1, -1))[0])


def score(model: FusionModel, x: np.ndarray) -> float:
    return model.score(x)


def frozen(array: np.ndarray, dtype: Any = np.float64) -> np.ndarray:
    out = np.array(array, dtype=dtype)
    out.setflags(write=False)
    return out
