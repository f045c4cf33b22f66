import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Type, TypeVar, Union

import toml
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError

from .backends import TrainConfig
from .errors import ConfigError
from .features import FeatureSpec
from .synthetic import SyntheticSpec
from .vad import CodecConfig, VadConfig

logger = logging.getLogger(__name__)

# Score fusion treats the published "coefficient 10000" as C, so lambda = 1/C.
SCORE_FUSION_LAMBDA = 1.0 / 10000

# Default configuration
DEFAULT_CONFIG: Dict[str, Any] = {
    "logs": {"verbose": False},
    "seed": 0,
    "output_dir": "out",
    "positive_labels": ["target"],
    "score_chunk": 4096,
    "stores": {},
    "backend": {"kind": "gbdt"},
}

DEFAULT_SCORE_FUSION_CONFIG: Dict[str, Any] = {
    "logs": {"verbose": False},
    "seed": 0,
    "output_dir": "out",
    "positive_labels": ["target"],
    "method": "backend",
    "backend": {
        "kind": "logreg",
        "reg_lambda": SCORE_FUSION_LAMBDA,
        "max_iterations": None,
    },
}

DEFAULT_SYNTHETIC_CONFIG: Dict[str, Any] = {
    "logs": {"verbose": False},
    "synthetic": {},
}

DEFAULT_AUDIO_CONFIG: Dict[str, Any] = {
    "logs": {"verbose": False},
    "output_dir": ".",
    "vad": {},
    "codec": {},
}


class LogsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    verbose: bool = False


class _RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    logs: LogsConfig = LogsConfig()
    seed: int = Field(default=0, ge=0, lt=2**64)
    output_dir: Path = Path("out")
    positive_labels: List[str] = ["target"]


class PipelineConfig(_RunConfig):
    """Embedding-level fusion run."""

    feature_spec: FeatureSpec
    backend: TrainConfig
    stores: Dict[str, Path]
    train_trials: Path
    dev_trials: Path
    eval_trials: Optional[Path] = None
    score_chunk: PositiveInt = 4096


class SubsystemScores(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    train: Path
    dev: Path
    eval: Optional[Path] = None


class ScoreFusionConfig(_RunConfig):
    """Score-level fusion run; one stacked column per subsystem, in order."""

    subsystems: List[SubsystemScores] = Field(min_length=2)
    method: Literal["backend", "sum"] = "backend"
    backend: TrainConfig


class SyntheticConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    logs: LogsConfig = LogsConfig()
    synthetic: SyntheticSpec = SyntheticSpec()


class AudioConfig(BaseModel):
    """Silence trimming and codec augmentation settings."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    logs: LogsConfig = LogsConfig()
    output_dir: Path = Path(".")
    vad: VadConfig = VadConfig()
    codec: CodecConfig = CodecConfig()


def merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; values of ``override`` win."""
    out = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a JSON or TOML file (chosen by suffix) into a dict."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".toml":
            data = toml.loads(text)
        else:
            data = json.loads(text)
    except (toml.TomlDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: cannot parse config: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table / object")
    return data


def _resolve(value: Any, base_dir: Path) -> Any:
    if value is None:
        return None
    candidate = Path(value)
    return str(candidate if candidate.is_absolute() else base_dir / candidate)


def _resolve_paths(data: Dict[str, Any], base_dir: Path) -> Dict[str, Any]:
    for key in ("train_trials", "dev_trials", "eval_trials", "output_dir"):
        if key in data:
            data[key] = _resolve(data[key], base_dir)
    if isinstance(data.get("stores"), dict):
        data["stores"] = {
            name: _resolve(p, base_dir) for name, p in data["stores"].items()
        }
    for subsystem in data.get("subsystems") or []:
        if isinstance(subsystem, dict):
            for key in ("train", "dev", "eval"):
                if key in subsystem:
                    subsystem[key] = _resolve(subsystem[key], base_dir)
    return data


_Model = TypeVar("_Model", bound=BaseModel)


def _seed_backend(data: Dict[str, Any]) -> Dict[str, Any]:
    # the backend inherits the run seed unless it names its own
    backend = data.get("backend")
    if isinstance(backend, dict) and "seed" not in backend and "seed" in data:
        backend["seed"] = data["seed"]
    return data


def build_config(
    model: Type[_Model],
    defaults: Mapping[str, Any],
    data: Mapping[str, Any],
    base_dir: Union[str, Path] = ".",
    source: str = "<config>",
) -> _Model:
    merged = _resolve_paths(merge(defaults, data), Path(base_dir))
    try:
        return model.model_validate(_seed_backend(merged))
    except ValidationError as e:
        raise ConfigError(f"{source}: {e}") from None


def load_config(
    path: Union[str, Path],
    model: Type[_Model],
    defaults: Mapping[str, Any],
    overrides: Optional[Mapping[str, Any]] = None,
) -> _Model:
    """Load ``path``, merge it over ``defaults`` and ``overrides`` over both."""
    path = Path(path)
    data = merge(read_config_file(path), overrides or {})
    logger.info("Loading configuration from %s", path)
    return build_config(model, defaults, data, path.parent, str(path))


def load_pipeline_config(
    path: Union[str, Path], overrides: Optional[Mapping[str, Any]] = None
) -> PipelineConfig:
    return load_config(path, PipelineConfig, DEFAULT_CONFIG, overrides)


def load_score_fusion_config(
    path: Union[str, Path], overrides: Optional[Mapping[str, Any]] = None
) -> ScoreFusionConfig:
    return load_config(path, ScoreFusionConfig, DEFAULT_SCORE_FUSION_CONFIG, overrides)


def load_synthetic_config(
    path: Optional[Union[str, Path]], overrides: Optional[Mapping[str, Any]] = None
) -> SyntheticConfig:
    if path is None:
        return build_config(SyntheticConfig, DEFAULT_SYNTHETIC_CONFIG, overrides or {})
    return load_config(path, SyntheticConfig, DEFAULT_SYNTHETIC_CONFIG, overrides)


def save_config(config: Mapping[str, Any], path: Union[str, Path]) -> None:
    """Save configuration to file, JSON or TOML by suffix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".toml":
        path.write_text(toml.dumps(dict(config)), encoding="utf-8")
    else:
        path.write_text(
            json.dumps(config, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )


def load_audio_config(
    path: Optional[Union[str, Path]], overrides: Optional[Mapping[str, Any]] = None
) -> AudioConfig:
    if path is None:
        return build_config(AudioConfig, DEFAULT_AUDIO_CONFIG, overrides or {})
    return load_config(path, AudioConfig, DEFAULT_AUDIO_CONFIG, overrides)
