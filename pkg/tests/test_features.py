# tests/test_features.py
import numpy as np
import pytest
from pydantic import ValidationError

from sasv_fuse.embstore import EmbeddingStore
from sasv_fuse.errors import AssemblyError, FeatureError
from sasv_fuse.features import (
    FeatureSpec,
    LabeledMatrix,
    apply_pca,
    apply_scaler,
    assemble_dataset,
    assemble_trial,
    cosine,
    fit_pca,
    fit_scaler,
    positive_rule,
)
from sasv_fuse.protocol import TrialLabel, parse_trials

SPEC = FeatureSpec.model_validate(
    {
        "parts": [
            {"store": "asv", "role": "enroll", "dim": 2},
            {"store": "asv", "role": "test", "dim": 2},
            {"store": "cm", "role": "test", "dim": 1},
        ]
    }
)


def _stores():
    asv = EmbeddingStore("asv", 2)
    asv.add("spk", [1.0, 0.0])
    asv.add("t1", [0.9, 0.1])
    asv.add("t2", [-1.0, 0.2])
    cm = EmbeddingStore("cm", 1)
    cm.add("t1", [0.5])
    cm.add("t2", [-3.0])
    return {"asv": asv, "cm": cm}


def test_assemble_concatenates_in_spec_order():
    trials = parse_trials("spk t1 target\nspk t2 spoof\n")
    row = assemble_trial(trials[0], _stores(), SPEC)
    assert row.tolist() == pytest.approx([1.0, 0.0, 0.9, 0.1, 0.5])
    data = assemble_dataset(trials, _stores(), SPEC)
    assert data.rows.shape == (2, SPEC.total_dim)
    assert data.labels.tolist() == [1, 0], "Only targets are positive by default"


def test_positive_rule_widens_the_positive_class():
    trials = parse_trials("spk t1 nontarget\nspk t2 spoof\n")
    rule = positive_rule(["target", "nontarget"])
    assert rule == {TrialLabel.TARGET, TrialLabel.NONTARGET}
    data = assemble_dataset(trials, _stores(), SPEC, rule)
    assert data.labels.tolist() == [1, 0]
    assert positive_rule(None) == {TrialLabel.TARGET}


def test_missing_embedding_names_trial_and_part():
    trials = parse_trials("spk t1 target\nspk t3 target\n")
    with pytest.raises(AssemblyError) as info:
        assemble_dataset(trials, _stores(), SPEC)
    message = str(info.value)
    assert "trial index 1" in message and "t3" in message and "asv:test" in message


def test_missing_store():
    trials = parse_trials("spk t1 target\n")
    with pytest.raises(AssemblyError, match="missing store 'cm'"):
        assemble_trial(trials[0], {"asv": _stores()["asv"]}, SPEC)


def test_duplicate_parts_rejected():
    with pytest.raises(ValidationError):
        FeatureSpec.model_validate(
            {
                "parts": [
                    {"store": "a", "role": "test", "dim": 1},
                    {"store": "a", "role": "test", "dim": 1},
                ]
            }
        )


def test_scaler_standardizes_and_handles_constant_columns():
    X = np.array([[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]])
    model = fit_scaler(X)
    Z = apply_scaler(model, X)
    assert Z[:, 0] == pytest.approx(np.array([-1.0, 0.0, 1.0]) * np.sqrt(1.5))
    assert np.all(Z[:, 1] == 0.0), "Constant columns map to zero"
    with pytest.raises(FeatureError):
        fit_scaler(np.zeros((0, 2)))


def test_pca_orders_axes_by_variance():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(500, 3)) * np.array([5.0, 1.0, 0.1])
    model = fit_pca(X, 2)
    assert model.k == 2
    assert abs(model.components[0, 0]) > 0.99, "First axis follows the widest column"
    assert model.explained_variance[0] > model.explained_variance[1]
    Z = apply_pca(model, X)
    assert Z.shape == (500, 2)
    assert np.allclose(Z.mean(axis=0), 0.0, atol=1e-10), "Projections are centered"
    full = fit_pca(X, 3)
    assert np.allclose(full.reconstruct(apply_pca(full, X)), X), "Full rank inverts"
    with pytest.raises(FeatureError):
        fit_pca(X, 4)


def test_cosine():
    assert cosine([1, 0], [2, 0]) == pytest.approx(1.0)
    assert cosine([1, 0], [0, 3]) == pytest.approx(0.0)
    assert cosine([1, 1], [-1, -1]) == pytest.approx(-1.0)
    with pytest.raises(FeatureError):
        cosine([0, 0], [1, 0])


def test_labeled_matrix_shape_check():
    with pytest.raises(FeatureError):
        LabeledMatrix(np.zeros((3, 2)), np.zeros(2, dtype=np.int8), ())
    data = LabeledMatrix.from_arrays(np.arange(4.0), [0, 1, 0, 1])
    assert (data.n, data.dim) == (4, 1)
