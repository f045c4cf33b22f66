"""
Gradient boosting of oblivious (symmetric) trees under logistic loss.

Every level of a tree applies one ``(feature, border)`` predicate to all of its
cells, so a depth-``D`` tree is ``D`` splits plus ``2**D`` leaf values. Split
candidates are per-feature borders quantized once before the first round; a
row's bin is the number of borders strictly below its value, and it goes left
at border ``k`` iff its bin is ``<= k`` (equivalently ``x <= border``).
"""

import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit

from .. import utils
from ..errors import NumericalError
from ..features import LabeledMatrix
from .base import FusionModel, ModelKind, TrainConfig, check_training_data, frozen

logger = logging.getLogger(__name__)


def feature_borders(column: np.ndarray, border_count: int) -> np.ndarray:
    """Midpoints between distinct values, thinned evenly to ``border_count``."""
    values = np.unique(column)
    if values.shape[0] < 2:
        return np.zeros(0)
    mids = (values[:-1] + values[1:]) / 2.0
    if mids.shape[0] > border_count:
        pick = np.linspace(0, mids.shape[0] - 1, border_count).round().astype(int)
        mids = mids[np.unique(pick)]
    return mids


def quantize(X: np.ndarray, borders: List[np.ndarray]) -> np.ndarray:
    bins = np.empty(X.shape, dtype=np.int64)
    for f, edges in enumerate(borders):
        bins[:, f] = np.searchsorted(edges, X[:, f], side="left")
    return bins


def logistic_loss(F: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


def _ratio(G: np.ndarray, N: np.ndarray, l2: float) -> np.ndarray:
    denom = N + l2
    return np.divide(G, denom, out=np.zeros_like(G), where=denom > 0)


def split_scores(
    cells: np.ndarray,
    n_cells: int,
    bins: np.ndarray,
    n_borders: int,
    grad: np.ndarray,
    l2: float,
) -> np.ndarray:
    """Sum over cells of G_L^2/(n_L+l2) + G_R^2/(n_R+l2) for every border."""
    width = n_borders + 1
    key = cells * width + bins
    G = np.bincount(key, weights=grad, minlength=n_cells * width).reshape(n_cells, -1)
    N = np.bincount(key, minlength=n_cells * width).reshape(n_cells, -1).astype(float)
    G_left = np.cumsum(G, axis=1)[:, :n_borders]
    N_left = np.cumsum(N, axis=1)[:, :n_borders]
    G_right = G.sum(axis=1, keepdims=True) - G_left
    N_right = N.sum(axis=1, keepdims=True) - N_left
    score = G_left * _ratio(G_left, N_left, l2) + G_right * _ratio(
        G_right, N_right, l2
    )
    return np.asarray(score.sum(axis=0))


@dataclass(frozen=True)
class ObliviousTree:
    features: np.ndarray
    thresholds: np.ndarray
    leaf_values: np.ndarray

    @property
    def depth(self) -> int:
        return int(self.features.shape[0])

    def cells(self, X: np.ndarray) -> np.ndarray:
        cell = np.zeros(X.shape[0], dtype=np.int64)
        for f, thr in zip(self.features, self.thresholds):
            cell = 2 * cell + (X[:, f] > thr)
        return cell

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.leaf_values[self.cells(X)])


def fit_oblivious_tree(
    bins: np.ndarray,
    borders: List[np.ndarray],
    grad: np.ndarray,
    cfg: TrainConfig,
    parallel: Optional[Parallel] = None,
) -> Tuple[ObliviousTree, np.ndarray]:
    """
    Grow one tree on the given rows; returns it with each row's leaf cell.

    Levels pick the highest-scoring ``(feature, border)``, first feature and
    then first border on ties. Growth stops early when no feature has a border.
    """
    depth = cfg.max_depth if cfg.max_depth is not None else 6
    l2 = cfg.l2_leaf_reg
    n_rows = bins.shape[0]
    cells = np.zeros(n_rows, dtype=np.int64)
    chosen: List[Tuple[int, int]] = []
    usable = [f for f, edges in enumerate(borders) if edges.shape[0]]
    for level in range(depth):
        if not usable:
            break
        n_cells = 2**level
        jobs = (
            delayed(split_scores)(
                cells, n_cells, bins[:, f], borders[f].shape[0], grad, l2
            )
            for f in usable
        )
        if parallel is None:
            scores = [func(*args, **kwargs) for func, args, kwargs in jobs]
        else:
            scores = parallel(jobs)
        best: Optional[Tuple[float, int, int]] = None
        for f, per_border in zip(usable, scores):
            k = int(np.argmax(per_border))
            if best is None or per_border[k] > best[0]:
                best = (float(per_border[k]), f, k)
        if best is None:
            break
        _, f, k = best
        chosen.append((f, k))
        cells = 2 * cells + (bins[:, f] > k)

    n_leaves = 2 ** len(chosen)
    G = np.bincount(cells, weights=grad, minlength=n_leaves)
    N = np.bincount(cells, minlength=n_leaves).astype(float)
    leaves = -cfg.learning_rate * _ratio(G, N, l2)
    tree = ObliviousTree(
        np.array([f for f, _ in chosen], dtype=np.int64),
        np.array([borders[f][k] for f, k in chosen], dtype=np.float64),
        leaves,
    )
    return tree, cells


class GbdtModel(FusionModel):
    """``F(x) = base_score + sum of tree outputs``, a log-odds score."""

    kind = ModelKind.GBDT

    def __init__(
        self,
        config: TrainConfig,
        feature_dim: int,
        base_score: float,
        trees: List[ObliviousTree],
    ):
        super().__init__(config, feature_dim)
        self.base_score = float(base_score)
        self.trees = [
            ObliviousTree(
                frozen(t.features, np.int64),
                frozen(t.thresholds),
                frozen(t.leaf_values),
            )
            for t in trees
        ]

    def _decision(self, X: np.ndarray) -> np.ndarray:
        F = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            F += tree.predict(X)
        return F

    def arrays(self) -> Dict[str, np.ndarray]:
        max_depth = max((t.depth for t in self.trees), default=0)
        n_trees = len(self.trees)
        features = np.full((n_trees, max_depth), -1, dtype=np.int64)
        thresholds = np.zeros((n_trees, max_depth))
        leaves = np.zeros((n_trees, 2**max_depth))
        for k, tree in enumerate(self.trees):
            features[k, : tree.depth] = tree.features
            thresholds[k, : tree.depth] = tree.thresholds
            leaves[k, : tree.leaf_values.shape[0]] = tree.leaf_values
        return {
            "base_score": np.array([self.base_score]),
            "depths": np.array([t.depth for t in self.trees], dtype=np.int64),
            "features": features,
            "thresholds": thresholds,
            "leaf_values": leaves,
        }

    @classmethod
    def from_arrays(
        cls, config: TrainConfig, feature_dim: int, arrays: Dict[str, np.ndarray]
    ) -> "GbdtModel":
        depths = arrays["depths"]
        width = int(arrays["features"].size // max(depths.shape[0], 1))
        features = arrays["features"].reshape(depths.shape[0], width)
        thresholds = arrays["thresholds"].reshape(depths.shape[0], width)
        leaves = arrays["leaf_values"].reshape(depths.shape[0], 2**width)
        trees = [
            ObliviousTree(
                features[k, :depth], thresholds[k, :depth], leaves[k, : 2**depth]
            )
            for k, depth in enumerate(int(d) for d in depths)
        ]
        return cls(config, feature_dim, float(arrays["base_score"][0]), trees)


def train_gbdt(
    data: LabeledMatrix, cfg: TrainConfig, threads: Optional[int] = None
) -> GbdtModel:
    check_training_data(data)
    started = time.monotonic()
    X = data.rows
    y = data.labels.astype(np.float64)
    prior = float(y.mean())
    base_score = float(np.log(prior / (1.0 - prior)))

    borders = [feature_borders(X[:, f], cfg.border_count) for f in range(data.dim)]
    bins = quantize(X, borders)
    rng = np.random.default_rng(cfg.seed)
    n_sample = max(1, int(round(cfg.subsample * data.n)))

    F = np.full(data.n, base_score)
    history = [logistic_loss(F, y)]
    trees: List[ObliviousTree] = []
    n_jobs = utils.resolve_threads(threads)
    with Parallel(n_jobs=n_jobs, prefer="threads") as pool:
        parallel = pool if n_jobs > 1 else None
        for _ in range(cfg.n_trees):
            grad = expit(F) - y
            if n_sample < data.n:
                rows = np.sort(rng.choice(data.n, size=n_sample, replace=False))
                tree, _ = fit_oblivious_tree(
                    bins[rows], borders, grad[rows], cfg, parallel
                )
                F = F + tree.predict(X)
            else:
                tree, cells = fit_oblivious_tree(bins, borders, grad, cfg, parallel)
                F = F + tree.leaf_values[cells]
            loss = logistic_loss(F, y)
            if not np.isfinite(loss):
                raise NumericalError("non-finite boosting loss")
            trees.append(tree)
            history.append(loss)

    model = GbdtModel(cfg, data.dim, base_score, trees)
    model.history = history
    logger.info(
        "Trained GBDT: %d rounds, depth %s, final loss %.6f (%s)",
        cfg.n_trees,
        cfg.max_depth,
        history[-1],
        utils.format_seconds(time.monotonic() - started),
    )
    return model
