"""
Per-trial feature vectors built by concatenating embeddings from several
stores, plus the standardization / PCA steps and cosine scoring.
"""

import logging
from dataclasses import dataclass
from typing import (
    Collection,
    FrozenSet,
    List,
    Literal,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator

from .embstore import EmbeddingStore
from .errors import AssemblyError, EmbeddingLookupError, FeatureError
from .protocol import TrialLabel, TrialList, TrialRecord

logger = logging.getLogger(__name__)

STDDEV_FLOOR = 1e-12
DEFAULT_POSITIVE = frozenset({TrialLabel.TARGET})


class FeaturePart(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    store: str
    role: Literal["enroll", "test"]
    dim: PositiveInt

    @property
    def name(self) -> str:
        return f"{self.store}:{self.role}"


class FeatureSpec(BaseModel):
    """Ordered concatenation recipe: which store, looked up by which id."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    parts: Tuple[FeaturePart, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def _distinct_parts(self) -> "FeatureSpec":
        keys = [(p.store, p.role) for p in self.parts]
        if len(set(keys)) != len(keys):
            raise ValueError("feature parts must be distinct per (store, role)")
        return self

    @property
    def total_dim(self) -> int:
        return sum(p.dim for p in self.parts)

    def store_names(self) -> List[str]:
        return list(dict.fromkeys(p.store for p in self.parts))


@dataclass(frozen=True)
class LabeledMatrix:
    rows: np.ndarray
    labels: np.ndarray
    trials: Tuple[TrialRecord, ...]

    def __post_init__(self) -> None:
        if self.rows.ndim != 2 or self.rows.shape[0] != self.labels.shape[0]:
            raise FeatureError(
                f"{self.rows.shape[0]} rows but {self.labels.shape[0]} labels"
            )

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    @classmethod
    def from_arrays(cls, rows: np.ndarray, labels: np.ndarray) -> "LabeledMatrix":
        """Matrix without trial provenance (synthetic or already-stacked data)."""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows.reshape(-1, 1)
        return cls(rows, np.asarray(labels, dtype=np.int8).reshape(-1), ())


def _lookup(
    trial: TrialRecord,
    part: FeaturePart,
    stores: Mapping[str, EmbeddingStore],
) -> np.ndarray:
    store = stores.get(part.store)
    if store is None:
        raise AssemblyError(
            f"trial {trial.enroll_id} {trial.test_id}: part '{part.name}' "
            f"refers to missing store '{part.store}'"
        )
    key = trial.enroll_id if part.role == "enroll" else trial.test_id
    try:
        vec = store.vector(key)
    except EmbeddingLookupError as e:
        raise AssemblyError(
            f"trial {trial.enroll_id} {trial.test_id}: part '{part.name}': {e}"
        ) from None
    if vec.shape[0] != part.dim:
        raise AssemblyError(
            f"trial {trial.enroll_id} {trial.test_id}: part '{part.name}' "
            f"expects dim {part.dim}, store holds dim {vec.shape[0]}"
        )
    return vec


def assemble_trial(
    trial: TrialRecord,
    stores: Mapping[str, EmbeddingStore],
    spec: FeatureSpec,
) -> np.ndarray:
    """Concatenate the FeatureSpec parts for one trial (float64, length total_dim)."""
    return np.concatenate(
        [_lookup(trial, part, stores).astype(np.float64) for part in spec.parts]
    )


def assemble_dataset(
    trials: TrialList,
    stores: Mapping[str, EmbeddingStore],
    spec: FeatureSpec,
    positive: Collection[TrialLabel] = DEFAULT_POSITIVE,
) -> LabeledMatrix:
    """
    Build the labeled matrix for a trial list.

    Rows follow trial order; a row is labeled 1 when its trial label is in
    ``positive`` (default: target only), else 0.
    """
    rows = np.zeros((len(trials), spec.total_dim), dtype=np.float64)
    for index, trial in enumerate(trials):
        try:
            rows[index] = assemble_trial(trial, stores, spec)
        except AssemblyError as e:
            raise AssemblyError(f"trial index {index}: {e}") from None
    wanted = set(positive)
    labels = np.array([r.label in wanted for r in trials], dtype=np.int8)
    logger.info(
        "Assembled %d x %d matrix (%d positive)",
        rows.shape[0],
        rows.shape[1],
        int(labels.sum()),
    )
    return LabeledMatrix(rows, labels, tuple(trials))


@dataclass(frozen=True)
class ScalerModel:
    mean: np.ndarray
    stddev: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.stddev


def fit_scaler(X: np.ndarray, floor: float = STDDEV_FLOOR) -> ScalerModel:
    """Column means and population standard deviations (floored)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise FeatureError("cannot fit a scaler on an empty matrix")
    mean = X.mean(axis=0)
    stddev = np.maximum(X.std(axis=0), floor)
    # constant columns center to exactly zero
    constant = np.all(X == X[0], axis=0)
    mean[constant] = X[0, constant]
    stddev[constant] = 1.0
    return ScalerModel(mean, stddev)


def apply_scaler(model: ScalerModel, X: np.ndarray) -> np.ndarray:
    return model.apply(X)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return int(self.components.shape[0])

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def reconstruct(self, Z: np.ndarray) -> np.ndarray:
        return Z @ self.components + self.mean


def fit_pca(X: np.ndarray, k: int) -> PcaModel:
    """
    Top-k principal axes from the eigen-decomposition of the sample covariance.

    Each component's sign is fixed so that its largest-magnitude coordinate is
    positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise FeatureError("cannot fit PCA on an empty matrix")
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise FeatureError(f"PCA k={k} out of range [1, {min(n, d)}]")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / max(n - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1][:k]
    components = eigvecs[:, order].T.copy()
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(k), pivots])
    signs[signs == 0] = 1.0
    components *= signs[:, None]
    explained = np.maximum(eigvals[order], 0.0)
    return PcaModel(mean, components, explained)


def apply_pca(model: PcaModel, X: np.ndarray) -> np.ndarray:
    return model.apply(X)


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    va = np.asarray(a, dtype=np.float64).reshape(-1)
    vb = np.asarray(b, dtype=np.float64).reshape(-1)
    if va.shape != vb.shape:
        raise FeatureError(f"cosine of vectors with dims {va.shape} and {vb.shape}")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise FeatureError("cosine of a zero-norm vector")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def positive_rule(labels: Optional[Sequence[str]]) -> FrozenSet[TrialLabel]:
    """Parse a positive-class rule such as ``["target", "nontarget"]``."""
    if not labels:
        return DEFAULT_POSITIVE
    return frozenset(TrialLabel.parse(label) for label in labels)
