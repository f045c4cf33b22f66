# tests/conftest.py
import struct
from pathlib import Path
from typing import Dict

import numpy as np
import pytest

from sasv_fuse import state
from sasv_fuse.backends import TrainConfig
from sasv_fuse.embstore import save_store
from sasv_fuse.features import LabeledMatrix, assemble_dataset
from sasv_fuse.protocol import save_trials
from sasv_fuse.synthetic import SyntheticData, SyntheticSpec, gen_synthetic


@pytest.fixture(autouse=True)
def clean_manifest():
    state.reset_manifest()
    yield
    state.reset_manifest()


@pytest.fixture(scope="session")
def xor_spec() -> SyntheticSpec:
    return SyntheticSpec(
        n_speakers=4,
        utterances_per_speaker=60,
        dev_utterances_per_speaker=250,
        eval_utterances_per_speaker=40,
        seed=7,
    )


@pytest.fixture(scope="session")
def xor_data(xor_spec: SyntheticSpec) -> SyntheticData:
    return gen_synthetic(xor_spec)


@pytest.fixture(scope="session")
def xor_matrices(
    xor_spec: SyntheticSpec, xor_data: SyntheticData
) -> Dict[str, LabeledMatrix]:
    return {
        name: assemble_dataset(trials, xor_data.stores, xor_spec.feature_spec())
        for name, trials in xor_data.trials.items()
    }


@pytest.fixture
def small_synth_dir(tmp_path: Path) -> Path:
    """A small synthetic dataset written as EMB1 stores and trial files."""
    spec = SyntheticSpec(
        n_speakers=4,
        utterances_per_speaker=30,
        dev_utterances_per_speaker=30,
        eval_utterances_per_speaker=20,
        seed=3,
    )
    data = gen_synthetic(spec)
    for name, store in data.stores.items():
        save_store(store, tmp_path / f"{name}.emb")
    for name, trials in data.trials.items():
        save_trials(trials, tmp_path / f"{name}.trials")
    return tmp_path


def pipeline_dict(spec: SyntheticSpec, **backend) -> dict:
    backend.setdefault("kind", "gbdt")
    if backend["kind"] == "gbdt":
        backend.setdefault("n_trees", 60)
        backend.setdefault("learning_rate", 0.2)
        backend.setdefault("border_count", 32)
    return {
        "seed": 0,
        "output_dir": "run",
        "feature_spec": spec.feature_spec().model_dump(mode="json"),
        "backend": backend,
        "stores": {"ecapa": "ecapa.emb", "aasist": "aasist.emb"},
        "train_trials": "train.trials",
        "dev_trials": "dev.trials",
        "eval_trials": "eval.trials",
    }


def xor_points(n_per_quadrant: int = 25, seed: int = 0, noise: float = 0.2):
    """Four Gaussian blobs around (+-1, +-1); label 1 where the signs agree."""
    rng = np.random.default_rng(seed)
    centers = np.array([[1, 1], [-1, -1], [1, -1], [-1, 1]], dtype=float)
    X = np.vstack(
        [c + rng.normal(0.0, noise, size=(n_per_quadrant, 2)) for c in centers]
    )
    y = np.repeat([1, 1, 0, 0], n_per_quadrant)
    return X, y


def pcm16_wav(samples: np.ndarray, rate: int = 16000, channels: int = 1) -> bytes:
    """Hand-built 16-bit PCM RIFF/WAVE bytes for integer ``samples``."""
    data = np.asarray(samples, dtype="<i2").tobytes()
    block = 2 * channels
    fmt = struct.pack("<HHIIHH", 1, channels, rate, rate * block, block, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


def float32_wav(samples: np.ndarray, rate: int = 16000) -> bytes:
    data = np.asarray(samples, dtype="<f4").tobytes()
    fmt = struct.pack("<HHIIHH", 3, 1, rate, rate * 4, 4, 32)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


# Small per-kind settings for fast tests
DESK_SETTINGS = {
    "mlp": {
        "layer_sizes": (16,),
        "epochs": 40,
        "learning_rate": 0.02,
        "batch_size": 32,
    },
    "logreg": {},
    "svm_linear": {"max_iterations": 2000},
    "svm_rbf": {"max_iterations": 2000},
    "svm_poly": {"degree": 3, "max_iterations": 2000},
    "rff_logreg": {"rff_dim": 100, "max_iterations": 500},
    "gmm": {"max_iterations": 50},
    "random_forest": {"n_trees": 8},
    "gbdt": {"n_trees": 20, "learning_rate": 0.3, "border_count": 32},
}


def desk_config(kind: str, **overrides) -> TrainConfig:
    return TrainConfig.for_kind(kind, **{**DESK_SETTINGS[kind], **overrides})


def accuracy(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.0) -> float:
    predicted = np.asarray(scores) > threshold
    return float(np.mean(predicted == (np.asarray(labels) == 1)))
