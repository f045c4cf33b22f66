"""
Random forest of CART trees (Gini impurity) on bootstrap resamples.

Each tree draws its own generator from ``SeedSequence(seed).spawn``, so the
trained forest depends only on the seed, never on how many threads built it.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from .. import utils
from ..features import LabeledMatrix
from .base import FusionModel, ModelKind, TrainConfig, check_training_data, frozen

logger = logging.getLogger(__name__)

LEAF = -1


@dataclass(frozen=True)
class Tree:
    """Nodes in creation order; ``feature == LEAF`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row. ``x <= threshold`` goes left."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            current = node[active]
            go_left = X[active, self.feature[current]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.value[self.apply(X)])


def resolve_max_features(setting: Union[str, int], d: int) -> int:
    if setting == "sqrt":
        return max(1, int(math.sqrt(d)))
    if setting == "all":
        return d
    return max(1, min(int(setting), d))


def best_gini_split(
    x: np.ndarray, y: np.ndarray, min_samples_leaf: int
) -> Optional[Tuple[float, float]]:
    """
    Lowest weighted Gini split of one feature as ``(impurity, threshold)``.

    Thresholds are midpoints between consecutive distinct values; on ties the
    lowest threshold wins. ``None`` when the feature cannot split the node.
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    m = xs.shape[0]
    left_n = np.arange(1, m, dtype=np.float64)
    left_pos = np.cumsum(ys)[:-1].astype(np.float64)
    right_n = m - left_n
    right_pos = float(ys.sum()) - left_pos
    valid = (xs[1:] > xs[:-1]) & (left_n >= min_samples_leaf)
    valid &= right_n >= min_samples_leaf
    if not valid.any():
        return None
    # n_L * gini_L + n_R * gini_R, over m
    impurity = (
        2.0 * left_pos * (left_n - left_pos) / left_n
        + 2.0 * right_pos * (right_n - right_pos) / right_n
    ) / m
    impurity = np.where(valid, impurity, np.inf)
    i = int(np.argmin(impurity))
    threshold = (xs[i] + xs[i + 1]) / 2.0
    if threshold >= xs[i + 1]:
        threshold = xs[i]
    return float(impurity[i]), float(threshold)


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_features: int,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 1,
) -> Tree:
    """
    Grow one CART tree until its leaves are pure (or ``max_depth``).

    At each node features are visited in a fresh random order; at least
    ``max_features`` are evaluated, and more while none has split the node.
    Ties go to the lowest feature index, then the lowest threshold.
    """
    d = X.shape[1]
    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []

    def new_node(frac: float) -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(frac)
        return len(feature) - 1

    root = new_node(float(y.mean()))
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        labels = y[idx]
        positives = int(labels.sum())
        if positives in (0, idx.shape[0]):
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        best: Optional[Tuple[float, int, float]] = None
        for visited, f in enumerate(rng.permutation(d), start=1):
            if visited > max_features and best is not None:
                break
            found = best_gini_split(X[idx, f], labels, min_samples_leaf)
            if found is None:
                continue
            candidate = (found[0], int(f), found[1])
            if best is None or candidate < best:
                best = candidate
        if best is None:
            continue
        _, f, thr = best
        goes_left = X[idx, f] <= thr
        left_idx, right_idx = idx[goes_left], idx[~goes_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(float(y[left_idx].mean()))
        right[node] = new_node(float(y[right_idx].mean()))
        # right first so the left subtree is expanded first
        stack.append((right[node], right_idx, depth + 1))
        stack.append((left[node], left_idx, depth + 1))

    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
    )


def _fit_random_tree(
    X: np.ndarray,
    y: np.ndarray,
    seed: np.random.SeedSequence,
    cfg: TrainConfig,
    max_features: int,
) -> Tree:
    rng = np.random.default_rng(seed)
    if cfg.bootstrap:
        sample = rng.integers(0, X.shape[0], X.shape[0])
        X, y = X[sample], y[sample]
    return build_tree(X, y, rng, max_features, cfg.max_depth)


def _frozen_tree(tree: Tree) -> Tree:
    return Tree(
        frozen(tree.feature, np.int64),
        frozen(tree.threshold),
        frozen(tree.left, np.int64),
        frozen(tree.right, np.int64),
        frozen(tree.value),
    )


class ForestModel(FusionModel):
    """Mean over trees of the positive fraction in the reached leaf."""

    kind = ModelKind.RANDOM_FOREST

    def __init__(self, config: TrainConfig, feature_dim: int, trees: List[Tree]):
        super().__init__(config, feature_dim)
        self.trees = [_frozen_tree(t) for t in trees]

    def _decision(self, X: np.ndarray) -> np.ndarray:
        if not self.trees:
            return np.full(X.shape[0], 0.5)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def arrays(self) -> Dict[str, np.ndarray]:
        offsets = np.cumsum([0] + [t.n_nodes for t in self.trees]).astype(np.int64)

        def stacked(name: str, dtype: type) -> np.ndarray:
            parts = [getattr(t, name) for t in self.trees]
            return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)

        return {
            "offsets": offsets,
            "feature": stacked("feature", np.int64),
            "threshold": stacked("threshold", np.float64),
            "left": stacked("left", np.int64),
            "right": stacked("right", np.int64),
            "value": stacked("value", np.float64),
        }

    @classmethod
    def from_arrays(
        cls, config: TrainConfig, feature_dim: int, arrays: Dict[str, np.ndarray]
    ) -> "ForestModel":
        offsets = arrays["offsets"]
        trees = [
            Tree(
                *(
                    arrays[name][offsets[k] : offsets[k + 1]]
                    for name in ("feature", "threshold", "left", "right", "value")
                )
            )
            for k in range(offsets.shape[0] - 1)
        ]
        return cls(config, feature_dim, trees)


def train_random_forest(
    data: LabeledMatrix, cfg: TrainConfig, threads: Optional[int] = None
) -> ForestModel:
    check_training_data(data)
    started = time.monotonic()
    max_features = resolve_max_features(cfg.max_features, data.dim)
    y = data.labels.astype(np.int64)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)
    trees = Parallel(n_jobs=utils.resolve_threads(threads), prefer="threads")(
        delayed(_fit_random_tree)(data.rows, y, seed, cfg, max_features)
        for seed in seeds
    )
    model = ForestModel(cfg, data.dim, list(trees))
    logger.info(
        "Trained random forest: %d trees, %d features per split, %d nodes (%s)",
        cfg.n_trees,
        max_features,
        sum(t.n_nodes for t in model.trees),
        utils.format_seconds(time.monotonic() - started),
    )
    return model
