# tests/test_metrics.py
import json
import math
import time

import numpy as np
import pytest

from sasv_fuse.errors import MetricError
from sasv_fuse.metrics import (
    EerReport,
    ScoreSet,
    available_metrics,
    det_points,
    eer,
    eer_oracle,
    relative_reduction,
    sasv_metrics,
)
from sasv_fuse.protocol import TrialLabel, TrialRecord


def _scores(target, nontarget=(), spoof=()) -> ScoreSet:
    pairs = []
    for label, values in (
        (TrialLabel.TARGET, target),
        (TrialLabel.NONTARGET, nontarget),
        (TrialLabel.SPOOF, spoof),
    ):
        for k, value in enumerate(values):
            pairs.append((TrialRecord("e", f"{label.value}{k}", label), value))
    return ScoreSet.from_pairs(pairs)


def test_perfect_separation():
    rate, threshold = eer([1.0, 2.0], [-1.0, 0.0])
    assert rate == 0.0, "Disjoint scores give a zero EER"
    assert threshold == 1.0, "Threshold sits at the lowest target score"


def test_inverted_scores():
    rate, _ = eer([0.0], [1.0])
    assert rate == 1.0, "Every target below every negative gives EER 1"


def test_all_scores_tied():
    rate, _ = eer([0.5, 0.5], [0.5])
    assert rate == pytest.approx(0.5), "Fully tied scores sit at chance"


def test_interpolated_crossing():
    rate, threshold = eer([2.0, 3.0, 4.0], [0.0, 1.0, 2.5])
    assert rate == pytest.approx(1.0 / 3.0)
    assert threshold == 2.5


def _random_sides(rng, max_size=200):
    """Two score lists of sizes 1..max_size; every third case is heavily tied."""
    pos = rng.normal(0.8, 1.0, size=rng.integers(1, max_size + 1))
    neg = rng.normal(0.0, 1.0, size=rng.integers(1, max_size + 1))
    if rng.integers(3) == 0:
        pos, neg = np.round(pos * 2.0) / 2.0, np.round(neg * 2.0) / 2.0
    return pos, neg


def test_matches_reference_sweep():
    rng = np.random.default_rng(11)
    cases = [_random_sides(rng) for _ in range(1000)]
    started = time.perf_counter()
    fast = [eer(pos, neg) for pos, neg in cases]
    elapsed = time.perf_counter() - started
    for k, ((pos, neg), (rate, threshold)) in enumerate(zip(cases, fast)):
        slow_rate, slow_threshold = eer_oracle(list(pos), list(neg))
        assert abs(rate - slow_rate) <= 1e-9, f"Case {k}"
        assert threshold == slow_threshold, f"Thresholds differ in case {k}"
    assert elapsed < 5.0, f"1000 EERs took {elapsed:.2f} s"


def test_reference_sweep_hand_cases():
    assert eer_oracle([1.0], [0.0]) == (0.0, 1.0)
    assert eer_oracle([0.0], [1.0])[0] == 1.0
    assert eer_oracle([0.5, 0.5], [0.5])[0] == pytest.approx(0.5)
    assert eer_oracle([0.8, 0.6, 0.4], [0.5, 0.3, 0.1])[0] == pytest.approx(1 / 3)
    with pytest.raises(MetricError):
        eer_oracle([], [1.0])


def test_eer_lies_between_step_values():
    rng = np.random.default_rng(3)
    for k in range(200):
        pos, neg = _random_sides(rng, max_size=40)
        points = det_points(pos, neg)
        lower = max(min(p.far, p.frr) for p in points)
        upper = min(max(p.far, p.frr) for p in points)
        rate, _ = eer(pos, neg)
        assert lower - 1e-12 <= rate <= upper + 1e-12, f"Case {k}"


def test_invariant_under_increasing_maps():
    rng = np.random.default_rng(5)
    maps = (lambda s: 3.0 * s - 7.0, np.exp)
    for k in range(100):
        # three decimals keep distinct scores distinct after either map
        pos, neg = (np.round(side, 3) for side in _random_sides(rng))
        base, _ = eer(pos, neg)
        for f in maps:
            assert eer(f(pos), f(neg))[0] == base, f"Case {k}"


def test_swapping_classes_and_negating_scores():
    rng = np.random.default_rng(8)
    for k in range(100):
        pos, neg = _random_sides(rng, max_size=80)
        rate, _ = eer(pos, neg)
        assert eer(-neg, -pos)[0] == pytest.approx(rate, abs=1e-12), f"Case {k}"


def test_det_points_are_monotone():
    points = det_points([0.2, 0.9, 0.4], [0.1, 0.5])
    assert points[0].threshold == -math.inf and points[-1].threshold == math.inf
    assert (points[0].far, points[0].frr) == (1.0, 0.0)
    assert (points[-1].far, points[-1].frr) == (0.0, 1.0)
    fars = [p.far for p in points]
    frrs = [p.frr for p in points]
    assert fars == sorted(fars, reverse=True), "FAR never increases"
    assert frrs == sorted(frrs), "FRR never decreases"


def test_empty_side_rejected():
    with pytest.raises(MetricError, match="no negative scores"):
        eer([1.0], [])


def test_pooled_and_balanced_sasv():
    scores = _scores([2.0, 3.0], [0.0], [2.5, 1.0, 1.0, 1.0])
    pooled = sasv_metrics(scores, ["sasv"])
    balanced = sasv_metrics(scores, ["sasv"], "balanced")
    assert pooled.sasv_eer == pytest.approx(0.2), "Pooled weighs every negative once"
    assert balanced.sasv_eer == pytest.approx(0.125), "Balanced halves each class"
    assert balanced.pooling == "balanced"


def test_each_metric_uses_its_negatives():
    scores = _scores([1.0, 2.0], [0.0, 0.5], [1.5, 3.0])
    report = sasv_metrics(scores)
    assert report.sv_eer == 0.0, "Nontargets sit below every target"
    assert report.spf_eer == pytest.approx(0.5)
    assert report.counts == {"target": 2, "nontarget": 2, "spoof": 2}
    assert set(report.thresholds) == {"sv", "spf", "sasv"}


def test_missing_class():
    scores = _scores([1.0], [0.0])
    assert available_metrics(scores) == ["sv", "sasv"]
    with pytest.raises(MetricError, match="needs at least one spoof trial"):
        sasv_metrics(scores, ["spf"])
    with pytest.raises(MetricError, match="unknown metric"):
        sasv_metrics(scores, ["min_tdcf"])
    assert available_metrics(_scores([], [0.0])) == []


def test_non_finite_score_rejected():
    with pytest.raises(MetricError):
        _scores([math.nan])


def test_report_json_has_no_infinities():
    report = EerReport(sv_eer=0.0, thresholds={"sv": math.inf}, seed=4)
    data = json.loads(report.to_json())
    assert data["thresholds"]["sv"] is None, "Infinite thresholds become null"
    assert data["seed"] == 4 and data["spf_eer"] is None


def test_relative_reduction():
    assert relative_reduction(0.2, 0.05) == pytest.approx(0.75)
    with pytest.raises(MetricError):
        relative_reduction(0.0, 0.1)
