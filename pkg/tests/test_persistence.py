# tests/test_persistence.py
import struct

import numpy as np
import pytest

from conftest import desk_config, xor_points
from sasv_fuse.backends import (
    ModelKind,
    dumps_model,
    load_model,
    loads_model,
    save_model,
    train,
)
from sasv_fuse.errors import ModelFormatError
from sasv_fuse.features import LabeledMatrix


@pytest.fixture(scope="module")
def xor_data():
    X, y = xor_points(n_per_quadrant=15)
    return LabeledMatrix.from_arrays(X, y)


@pytest.mark.parametrize("kind", [k.value for k in ModelKind])
def test_saved_models_score_identically(kind, xor_data, tmp_path):
    model = train(xor_data, desk_config(kind, seed=12))
    path = tmp_path / "model.fmd"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.kind is model.kind
    assert loaded.config == model.config, "The config echo comes back"
    probe = np.random.default_rng(0).normal(size=(40, 2))
    assert np.array_equal(loaded.score_batch(probe), model.score_batch(probe)), (
        "Scores should be bit-identical after a reload"
    )
    assert dumps_model(loaded) == path.read_bytes(), "Re-saving gives the same bytes"


def test_header_layout(xor_data):
    blob = dumps_model(train(xor_data, desk_config("logreg", seed=3)))
    magic, tag, dim, seed = struct.unpack_from("<4sBIQ", blob)
    assert (magic, tag, dim, seed) == (b"FMD1", 1, 2, 3)


def test_format_errors(xor_data):
    blob = dumps_model(train(xor_data, desk_config("logreg")))
    with pytest.raises(ModelFormatError, match="bad magic"):
        loads_model(b"FMD0" + blob[4:])
    with pytest.raises(ModelFormatError, match="unknown kind tag 200"):
        loads_model(blob[:4] + bytes([200]) + blob[5:])
    with pytest.raises(ModelFormatError, match="truncated"):
        loads_model(blob[:-3])
    with pytest.raises(ModelFormatError, match="trailing bytes"):
        loads_model(blob + b"\x00")
    with pytest.raises(ModelFormatError, match="config echo disagrees"):
        loads_model(blob[:4] + bytes([2]) + blob[5:])


def test_unreadable_model_file(tmp_path):
    with pytest.raises(ModelFormatError, match="cannot read"):
        load_model(tmp_path / "none.fmd")
