"""
Equal error rates for spoofing-aware speaker verification.

A trial is accepted when ``score >= threshold``. Thresholds sweep ``-inf``,
every distinct score, then ``+inf``; the EER is read off the linear
interpolation between the two operating points where FRR - FAR changes sign.

  - SV-EER:   target vs nontarget
  - SPF-EER:  target vs spoof
  - SASV-EER: target vs nontarget + spoof
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import (
    Dict,
    Iterable,
    List,
    Literal,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from .errors import MetricError
from .protocol import TrialLabel, TrialRecord
from .utils import finite_or_none

logger = logging.getLogger(__name__)

METRICS = ("sv", "spf", "sasv")
Pooling = Literal["pooled", "balanced"]

# negatives per metric
NEGATIVES: Dict[str, Tuple[TrialLabel, ...]] = {
    "sv": (TrialLabel.NONTARGET,),
    "spf": (TrialLabel.SPOOF,),
    "sasv": (TrialLabel.NONTARGET, TrialLabel.SPOOF),
}


class DetPoint(NamedTuple):
    threshold: float
    far: float
    frr: float


def _scores(values: Iterable[float], side: str) -> np.ndarray:
    array = np.asarray(list(values), dtype=np.float64).reshape(-1)
    if array.shape[0] == 0:
        raise MetricError(f"no {side} scores")
    if not np.all(np.isfinite(array)):
        raise MetricError(f"non-finite {side} score")
    return array


def _thresholds(*groups: np.ndarray) -> np.ndarray:
    return np.concatenate([[-np.inf], np.unique(np.concatenate(groups)), [np.inf]])


def _frr(positive: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    ordered = np.sort(positive)
    return np.searchsorted(ordered, thresholds, side="left") / ordered.shape[0]


def _far(negative: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    ordered = np.sort(negative)
    below = np.searchsorted(ordered, thresholds, side="left")
    return (ordered.shape[0] - below) / ordered.shape[0]


def _crossing(
    thresholds: np.ndarray, far: np.ndarray, frr: np.ndarray
) -> Tuple[float, float]:
    diff = frr - far
    k = int(np.argmax(diff >= 0.0))
    if diff[k] == 0.0:
        rate = float(far[k])
    else:
        alpha = -diff[k - 1] / (diff[k] - diff[k - 1])
        rate = float(far[k - 1] + alpha * (far[k] - far[k - 1]))
    threshold = float(thresholds[int(np.argmin(np.abs(diff)))])
    return rate, threshold


def det_points(
    positive_scores: Iterable[float], negative_scores: Iterable[float]
) -> List[DetPoint]:
    """(threshold, FAR, FRR) for every threshold of the sweep, ascending."""
    pos = _scores(positive_scores, "positive")
    neg = _scores(negative_scores, "negative")
    thresholds = _thresholds(pos, neg)
    far, frr = _far(neg, thresholds), _frr(pos, thresholds)
    return [
        DetPoint(float(t), float(a), float(r))
        for t, a, r in zip(thresholds, far, frr)
    ]


def eer(
    positive_scores: Iterable[float], negative_scores: Iterable[float]
) -> Tuple[float, float]:
    """EER and the sweep threshold where |FRR - FAR| is smallest (first on ties)."""
    pos = _scores(positive_scores, "positive")
    neg = _scores(negative_scores, "negative")
    thresholds = _thresholds(pos, neg)
    return _crossing(thresholds, _far(neg, thresholds), _frr(pos, thresholds))


def balanced_eer(
    positive_scores: Iterable[float], negative_groups: Sequence[Iterable[float]]
) -> Tuple[float, float]:
    """EER with FAR averaged over negative groups, each weighted equally."""
    pos = _scores(positive_scores, "positive")
    groups = [_scores(g, "negative") for g in negative_groups]
    thresholds = _thresholds(pos, *groups)
    far = np.mean([_far(g, thresholds) for g in groups], axis=0)
    return _crossing(thresholds, far, _frr(pos, thresholds))


def eer_oracle(
    positive_scores: Sequence[float], negative_scores: Sequence[float]
) -> Tuple[float, float]:
    """
    Reference EER by brute force, sharing nothing with ``eer``.

    Every distinct score plus -inf / +inf is tried as a threshold and both
    error rates are counted directly at each one. The EER is where the
    polyline through the (FAR, FRR) points meets FAR = FRR: every segment is
    intersected with the diagonal and the largest crossing is returned.
    """
    pos = [float(s) for s in positive_scores]
    neg = [float(s) for s in negative_scores]
    if not pos or not neg:
        raise MetricError("eer needs positive and negative scores")
    sweep = [-math.inf] + sorted(set(pos) | set(neg)) + [math.inf]
    t = np.array(sweep)[:, None]
    frr = np.count_nonzero(np.array(pos)[None, :] < t, axis=1) / len(pos)
    far = np.count_nonzero(np.array(neg)[None, :] >= t, axis=1) / len(neg)
    gap = np.abs(frr - far)
    threshold = sweep[int(np.flatnonzero(gap == gap.min())[0])]

    crossings = []
    for k in range(1, len(sweep)):
        far0, frr0, far1, frr1 = far[k - 1], frr[k - 1], far[k], frr[k]
        d0, d1 = frr0 - far0, frr1 - far1
        if d0 == 0.0:
            crossings.append(float(far0))
        if d1 == 0.0:
            crossings.append(float(far1))
        if d0 < 0.0 < d1:
            alpha = -d0 / (d1 - d0)
            crossings.append(float(far0 + alpha * (far1 - far0)))
    # the sweep starts at (FAR 1, FRR 0) and ends at (FAR 0, FRR 1)
    return max(crossings), threshold


@dataclass(frozen=True)
class ScoreSet:
    """Scored trials; every score finite."""

    entries: Tuple[Tuple[TrialRecord, float], ...]

    def __post_init__(self) -> None:
        for trial, value in self.entries:
            if not math.isfinite(value):
                raise MetricError(
                    f"non-finite score for {trial.enroll_id} {trial.test_id}"
                )

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[TrialRecord, float]]) -> "ScoreSet":
        return cls(tuple((trial, float(value)) for trial, value in pairs))

    def __len__(self) -> int:
        return len(self.entries)

    def scores_for(self, *labels: TrialLabel) -> np.ndarray:
        wanted = set(labels)
        return np.array(
            [value for trial, value in self.entries if trial.label in wanted],
            dtype=np.float64,
        )

    def counts(self) -> Dict[str, int]:
        tally = {label.value: 0 for label in TrialLabel}
        for trial, _ in self.entries:
            tally[trial.label.value] += 1
        return tally


@dataclass
class EerReport:
    sv_eer: Optional[float] = None
    spf_eer: Optional[float] = None
    sasv_eer: Optional[float] = None
    thresholds: Dict[str, Optional[float]] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=dict)
    pooling: str = "pooled"
    seed: Optional[int] = None

    def get(self, metric: str) -> Optional[float]:
        value: Optional[float] = getattr(self, f"{metric}_eer")
        return value

    def to_dict(self) -> Dict[str, object]:
        return {
            "sv_eer": self.sv_eer,
            "spf_eer": self.spf_eer,
            "sasv_eer": self.sasv_eer,
            "thresholds": {
                k: None if v is None else finite_or_none(v)
                for k, v in self.thresholds.items()
            },
            "counts": dict(self.counts),
            "pooling": self.pooling,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def available_metrics(scores: ScoreSet) -> List[str]:
    """Metrics whose classes are all present in ``scores``."""
    counts = scores.counts()
    if not counts[TrialLabel.TARGET.value]:
        return []
    return [
        metric
        for metric in METRICS
        if any(counts[label.value] for label in NEGATIVES[metric])
    ]


def sasv_metrics(
    scores: ScoreSet,
    requested: Sequence[str] = METRICS,
    pooling: Pooling = "pooled",
) -> EerReport:
    """
    Compute the requested EERs.

    ``pooling`` decides how SASV-EER treats its two negative classes: pooled
    counts every negative trial once, balanced gives nontarget and spoof half
    of the false-acceptance mass each.
    """
    report = EerReport(counts=scores.counts(), pooling=pooling)
    targets = scores.scores_for(TrialLabel.TARGET)
    for metric in requested:
        if metric not in NEGATIVES:
            raise MetricError(f"unknown metric '{metric}'")
        if targets.shape[0] == 0:
            raise MetricError(f"metric '{metric}' needs at least one target trial")
        groups = [scores.scores_for(label) for label in NEGATIVES[metric]]
        present = [g for g in groups if g.shape[0]]
        if not present:
            names = " or ".join(label.value for label in NEGATIVES[metric])
            raise MetricError(f"metric '{metric}' needs at least one {names} trial")
        if metric == "sasv" and pooling == "balanced" and len(present) == 2:
            rate, threshold = balanced_eer(targets, present)
        else:
            rate, threshold = eer(targets, np.concatenate(present))
        setattr(report, f"{metric}_eer", rate)
        report.thresholds[metric] = threshold
    logger.info(
        "EER over %d trials: %s",
        len(scores),
        ", ".join(f"{m}={report.get(m)}" for m in requested),
    )
    return report


def relative_reduction(baseline: float, system: float) -> float:
    """(baseline - system) / baseline."""
    if baseline == 0.0:
        raise MetricError("relative reduction against a zero baseline")
    return (baseline - system) / baseline
