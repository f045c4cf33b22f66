"""
FMD1: self-describing binary container for trained fusion models.

Layout, little-endian::

    b"FMD1"  u8 kind_tag  u32 feature_dim  u64 seed
    u32 config_len  config (UTF-8 JSON, sorted keys)
    u32 n_arrays
    per array: u16 name_len  name  u8 dtype_code  u8 ndim  ndim x u64  raw data

Arrays are written as raw float64 / int64 bytes, so a save/load cycle gives
back bit-identical parameters and therefore bit-identical scores.
"""

import json
import struct
from pathlib import Path
from typing import Dict, List, Type, Union

import numpy as np
from pydantic import ValidationError

from ..errors import ModelFormatError
from .base import FusionModel, ModelKind, TrainConfig
from .forest import ForestModel
from .gbdt import GbdtModel
from .gmm import GmmModel
from .linear import LogisticModel
from .mlp import MlpModel
from .rff import RffModel
from .svm import LinearSvmModel, PolySvmModel, RbfSvmModel

MAGIC = b"FMD1"
KIND_TAGS: List[ModelKind] = list(ModelKind)
MODEL_CLASSES: Dict[ModelKind, Type[FusionModel]] = {
    ModelKind.MLP: MlpModel,
    ModelKind.LOGREG: LogisticModel,
    ModelKind.SVM_LINEAR: LinearSvmModel,
    ModelKind.SVM_RBF: RbfSvmModel,
    ModelKind.SVM_POLY: PolySvmModel,
    ModelKind.RFF_LOGREG: RffModel,
    ModelKind.GMM: GmmModel,
    ModelKind.RANDOM_FOREST: ForestModel,
    ModelKind.GBDT: GbdtModel,
}
DTYPES = [np.dtype("<f8"), np.dtype("<i8")]

_HEAD = struct.Struct("<4sBIQ")
_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")
_ARRAY_HEAD = struct.Struct("<BB")
_U64 = struct.Struct("<Q")


def dumps_model(model: FusionModel) -> bytes:
    config = json.dumps(model.config.echo(), sort_keys=True).encode("utf-8")
    arrays = model.arrays()
    parts = [
        _HEAD.pack(
            MAGIC, KIND_TAGS.index(model.kind), model.feature_dim, model.config.seed
        ),
        _U32.pack(len(config)),
        config,
        _U32.pack(len(arrays)),
    ]
    for name, array in arrays.items():
        array = np.asarray(array)
        code = 1 if np.issubdtype(array.dtype, np.integer) else 0
        raw_name = name.encode("utf-8")
        parts.append(_U16.pack(len(raw_name)))
        parts.append(raw_name)
        parts.append(_ARRAY_HEAD.pack(code, array.ndim))
        parts.extend(_U64.pack(dim) for dim in array.shape)
        parts.append(np.ascontiguousarray(array, dtype=DTYPES[code]).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.view = memoryview(blob)
        self.offset = 0

    def take(self, size: int, what: str) -> memoryview:
        end = self.offset + size
        if end > len(self.view):
            raise ModelFormatError(
                f"truncated {what}: expected {size} bytes, "
                f"got {len(self.view) - self.offset}"
            )
        chunk = self.view[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: struct.Struct, what: str) -> tuple:
        return fmt.unpack(self.take(fmt.size, what))


def loads_model(blob: bytes) -> FusionModel:
    reader = _Reader(blob)
    if bytes(reader.view[:4]) != MAGIC:
        raise ModelFormatError(f"bad magic {bytes(reader.view[:4])!r}, expected FMD1")
    _, tag, feature_dim, seed = reader.unpack(_HEAD, "header")
    if tag >= len(KIND_TAGS):
        raise ModelFormatError(f"unknown kind tag {tag}")
    kind = KIND_TAGS[tag]

    (config_len,) = reader.unpack(_U32, "config length")
    try:
        config = TrainConfig.model_validate(
            json.loads(bytes(reader.take(config_len, "config")).decode("utf-8"))
        )
    except (ValueError, ValidationError) as e:
        raise ModelFormatError(f"invalid config echo: {e}") from None
    if config.kind is not kind or config.seed != seed:
        raise ModelFormatError("config echo disagrees with the header")

    arrays: Dict[str, np.ndarray] = {}
    (n_arrays,) = reader.unpack(_U32, "array count")
    for _ in range(n_arrays):
        (name_len,) = reader.unpack(_U16, "array name length")
        name = bytes(reader.take(name_len, "array name")).decode("utf-8")
        code, ndim = reader.unpack(_ARRAY_HEAD, f"array '{name}' header")
        if code >= len(DTYPES):
            raise ModelFormatError(f"array '{name}': unknown dtype code {code}")
        shape = tuple(
            int(reader.unpack(_U64, f"array '{name}' shape")[0]) for _ in range(ndim)
        )
        count = int(np.prod(shape, dtype=np.int64))
        raw = reader.take(count * DTYPES[code].itemsize, f"array '{name}' data")
        arrays[name] = np.frombuffer(raw, dtype=DTYPES[code]).reshape(shape).copy()
    if reader.offset != len(reader.view):
        raise ModelFormatError(
            f"{len(reader.view) - reader.offset} trailing bytes after the last array"
        )
    try:
        return MODEL_CLASSES[kind].from_arrays(config, feature_dim, arrays)
    except KeyError as e:
        raise ModelFormatError(f"{kind.value} model is missing array {e}") from None


def save_model(model: FusionModel, path: Union[str, Path]) -> None:
    Path(path).write_bytes(dumps_model(model))


def load_model(path: Union[str, Path]) -> FusionModel:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise ModelFormatError(f"cannot read {path}: {e}") from None
    return loads_model(blob)
