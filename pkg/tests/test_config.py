# tests/test_config.py
import json

import pytest

from sasv_fuse.backends import ModelKind
from sasv_fuse.config import (
    SCORE_FUSION_LAMBDA,
    load_audio_config,
    load_pipeline_config,
    load_score_fusion_config,
    load_synthetic_config,
    merge,
    read_config_file,
    save_config,
)
from sasv_fuse.errors import ConfigError

PIPELINE = {
    "feature_spec": {"parts": [{"store": "asv", "role": "test", "dim": 4}]},
    "stores": {"asv": "emb/asv.emb"},
    "train_trials": "train.trials",
    "dev_trials": "/abs/dev.trials",
}


def test_merge_is_recursive():
    merged = merge({"a": {"b": 1, "c": 2}, "d": 3}, {"a": {"b": 5}})
    assert merged == {"a": {"b": 5, "c": 2}, "d": 3}


def test_pipeline_defaults_and_relative_paths(tmp_path):
    path = tmp_path / "run.json"
    save_config(PIPELINE, path)
    cfg = load_pipeline_config(path)
    assert cfg.backend.kind is ModelKind.GBDT, "GBDT is the default back-end"
    assert cfg.backend.n_trees == 700
    assert cfg.stores["asv"] == tmp_path / "emb" / "asv.emb", "Relative to the file"
    assert str(cfg.dev_trials) == "/abs/dev.trials", "Absolute paths stay"
    assert cfg.output_dir == tmp_path / "out"
    assert cfg.score_chunk == 4096 and cfg.eval_trials is None


def test_backend_inherits_the_run_seed(tmp_path):
    path = tmp_path / "run.toml"
    save_config({**PIPELINE, "seed": 17}, path)
    assert load_pipeline_config(path).backend.seed == 17
    pinned = load_pipeline_config(path, {"backend": {"kind": "mlp", "seed": 2}})
    assert pinned.backend.seed == 2 and pinned.seed == 17


def test_score_fusion_defaults(tmp_path):
    path = tmp_path / "fusion.json"
    subsystems = [
        {"name": n, "train": f"{n}.trn", "dev": f"{n}.dev"} for n in ("a", "b")
    ]
    save_config({"subsystems": subsystems}, path)
    cfg = load_score_fusion_config(path)
    assert cfg.method == "backend"
    assert cfg.backend.kind is ModelKind.LOGREG
    assert cfg.backend.reg_lambda == SCORE_FUSION_LAMBDA
    assert cfg.backend.max_iterations is None, "Score fusion runs to convergence"
    assert cfg.subsystems[0].train == tmp_path / "a.trn"


def test_score_fusion_needs_two_subsystems(tmp_path):
    path = tmp_path / "fusion.json"
    save_config({"subsystems": [{"name": "a", "train": "x", "dev": "y"}]}, path)
    with pytest.raises(ConfigError):
        load_score_fusion_config(path)


def test_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        read_config_file(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="cannot parse"):
        read_config_file(broken)
    listed = tmp_path / "list.json"
    listed.write_text(json.dumps([1, 2]), encoding="utf-8")
    with pytest.raises(ConfigError, match="top level"):
        read_config_file(listed)
    unknown = tmp_path / "unknown.json"
    save_config({**PIPELINE, "backend": {"kind": "xgboost"}}, unknown)
    with pytest.raises(ConfigError):
        load_pipeline_config(unknown)


def test_optional_configs_without_a_file():
    synth = load_synthetic_config(None, {"synthetic": {"seed": 4}})
    assert synth.synthetic.seed == 4 and synth.synthetic.n_speakers == 4
    audio = load_audio_config(None)
    assert audio.vad.frame_ms == 25 and audio.vad.threshold_db == -40.0
    assert set(audio.codec.codecs) == {"mp3", "aac"}
