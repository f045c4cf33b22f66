# tests/test_fusion_xor.py
"""All nine back-ends on the XOR-structured synthetic set."""

from typing import Dict

import pytest

from sasv_fuse.backends import ModelKind, TrainConfig, train
from sasv_fuse.metrics import EerReport, ScoreSet, sasv_metrics

SETTINGS = {
    ModelKind.MLP: {
        "layer_sizes": (64, 32),
        "epochs": 60,
        "learning_rate": 0.01,
        "batch_size": 64,
    },
    ModelKind.LOGREG: {},
    ModelKind.SVM_LINEAR: {"max_iterations": 5000},
    ModelKind.SVM_RBF: {"reg_lambda": 1e-3, "max_iterations": 5000},
    ModelKind.SVM_POLY: {"max_iterations": 3000},
    ModelKind.RFF_LOGREG: {"rff_dim": 500, "max_iterations": 2000},
    ModelKind.GMM: {"max_iterations": 200},
    ModelKind.RANDOM_FOREST: {"n_trees": 30},
    ModelKind.GBDT: {"n_trees": 150, "learning_rate": 0.1, "border_count": 64},
}
LINEAR = (ModelKind.LOGREG, ModelKind.SVM_LINEAR)
NONLINEAR = (
    ModelKind.MLP,
    ModelKind.SVM_RBF,
    ModelKind.RFF_LOGREG,
    ModelKind.GMM,
    ModelKind.RANDOM_FOREST,
    ModelKind.GBDT,
)


@pytest.fixture(scope="module")
def dev_reports(xor_matrices) -> Dict[ModelKind, EerReport]:
    reports = {}
    dev = xor_matrices["dev"]
    for kind, settings in SETTINGS.items():
        model = train(
            xor_matrices["train"], TrainConfig.for_kind(kind, **settings), threads=2
        )
        scores = ScoreSet.from_pairs(zip(dev.trials, model.score_batch(dev.rows)))
        reports[kind] = sasv_metrics(scores)
    return reports


@pytest.mark.slow
@pytest.mark.parametrize("kind", LINEAR)
def test_linear_models_cannot_verify_speakers(dev_reports, kind):
    assert dev_reports[kind].sv_eer >= 0.45, f"{kind.value} should sit near chance"


@pytest.mark.slow
def test_rbf_svm_verifies_speakers(dev_reports):
    assert dev_reports[ModelKind.SVM_RBF].sv_eer <= 0.25


@pytest.mark.slow
@pytest.mark.parametrize("kind", NONLINEAR)
def test_nonlinear_models_reject_spoofs(dev_reports, kind):
    assert dev_reports[kind].spf_eer <= 0.02, f"{kind.value} lets spoofs through"


@pytest.mark.slow
def test_gbdt_is_the_best_fusion(dev_reports):
    best = dev_reports[ModelKind.GBDT].sasv_eer
    assert best <= 0.05
    for kind, report in dev_reports.items():
        assert best <= report.sasv_eer + 0.005, f"GBDT trails {kind.value}"
