"""
Fixed-dimension embedding stores and the EMB1 binary container.

EMB1 layout, little-endian, no padding::

    b"EMB1"  u32 record_count  u32 dim  u16 name_len  name (UTF-8)
    per record: u16 id_len  id (UTF-8)  dim x f32

Values are kept as float32 exactly as read, so a write/read cycle preserves
every bit.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Tuple, Union

import numpy as np

from .errors import (
    BadMagicError,
    DimMismatchError,
    EmbeddingLookupError,
    NonFiniteValueError,
    StoreLoadError,
    TruncatedRecordError,
)

logger = logging.getLogger(__name__)

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")
_U16 = struct.Struct("<H")
_F32 = np.dtype("<f4")


@dataclass(frozen=True)
class Embedding:
    id: str
    values: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def _frozen_vector(values: Iterable[float]) -> np.ndarray:
    vec = np.array(values, dtype=_F32).reshape(-1)
    vec.setflags(write=False)
    return vec


class EmbeddingStore:
    """
    Map from identifier to a float32 vector of the store's uniform dimension.

    Stores are filled once (``add`` or ``read_store``) and then only read;
    returned vectors are read-only views.
    """

    def __init__(self, source_name: str, dim: int):
        if dim <= 0:
            raise StoreLoadError(f"dim must be positive, got {dim}")
        self.source_name = source_name
        self.dim = int(dim)
        self._entries: Dict[str, np.ndarray] = {}

    def add(self, id: str, values: Iterable[float]) -> None:
        if not id or any(ch.isspace() for ch in id):
            raise StoreLoadError(f"invalid identifier {id!r}")
        if id in self._entries:
            raise StoreLoadError(f"duplicate identifier '{id}'")
        vec = _frozen_vector(values)
        if vec.shape[0] != self.dim:
            raise DimMismatchError(
                f"dim mismatch for '{id}': expected {self.dim}, got {vec.shape[0]}",
                len(self._entries),
            )
        if not np.all(np.isfinite(vec)):
            raise NonFiniteValueError(
                f"non-finite value in '{id}'", len(self._entries)
            )
        self._entries[id] = vec

    def get(self, id: str) -> Embedding:
        return Embedding(id, self.vector(id))

    def vector(self, id: str) -> np.ndarray:
        try:
            return self._entries[id]
        except KeyError:
            raise EmbeddingLookupError(
                f"embedding '{id}' not found in store '{self.source_name}'"
            ) from None

    def __contains__(self, id: object) -> bool:
        return id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def ids(self) -> List[str]:
        return list(self._entries)

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self._entries.items())

    def matrix(self) -> np.ndarray:
        """All vectors stacked in insertion order, shape (len, dim)."""
        if not self._entries:
            return np.zeros((0, self.dim), dtype=_F32)
        return np.stack(list(self._entries.values()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        if (self.source_name, self.dim) != (other.source_name, other.dim):
            return False
        if self._entries.keys() != other._entries.keys():
            return False
        return all(
            self._entries[k].tobytes() == other._entries[k].tobytes()
            for k in self._entries
        )

    def __repr__(self) -> str:
        return (
            f"EmbeddingStore(source_name={self.source_name!r}, dim={self.dim}, "
            f"records={len(self)})"
        )


def get(store: EmbeddingStore, id: str) -> Embedding:
    return store.get(id)


def write_store(store: EmbeddingStore) -> bytes:
    name = store.source_name.encode("utf-8")
    parts = [_HEADER.pack(MAGIC, len(store), store.dim), _U16.pack(len(name)), name]
    for id, vec in store.items():
        raw_id = id.encode("utf-8")
        parts.append(_U16.pack(len(raw_id)))
        parts.append(raw_id)
        parts.append(vec.astype(_F32, copy=False).tobytes())
    return b"".join(parts)


def read_store(blob: bytes) -> EmbeddingStore:
    """Decode an EMB1 container, validating every record."""
    view = memoryview(blob)
    if len(view) < 4 or bytes(view[:4]) != MAGIC:
        raise BadMagicError(f"bad magic {bytes(view[:4])!r}, expected {MAGIC!r}")
    if len(view) < _HEADER.size + _U16.size:
        raise TruncatedRecordError("truncated header")
    _, count, dim = _HEADER.unpack_from(view, 0)
    offset = _HEADER.size
    (name_len,) = _U16.unpack_from(view, offset)
    offset += _U16.size
    if offset + name_len > len(view):
        raise TruncatedRecordError("truncated source name")
    source_name = bytes(view[offset : offset + name_len]).decode("utf-8")
    offset += name_len
    if dim == 0:
        raise DimMismatchError("declared dim is 0")

    store = EmbeddingStore(source_name, dim)
    value_bytes = dim * _F32.itemsize
    for index in range(count):
        if offset + _U16.size > len(view):
            raise TruncatedRecordError("truncated id length", index)
        (id_len,) = _U16.unpack_from(view, offset)
        offset += _U16.size
        if offset + id_len + value_bytes > len(view):
            raise TruncatedRecordError(
                f"need {id_len + value_bytes} bytes, "
                f"{len(view) - offset} available",
                index,
            )
        try:
            id = bytes(view[offset : offset + id_len]).decode("utf-8")
        except UnicodeDecodeError:
            raise StoreLoadError("identifier is not valid UTF-8", index) from None
        offset += id_len
        values = np.frombuffer(view, dtype=_F32, count=dim, offset=offset).copy()
        offset += value_bytes
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError(f"non-finite value in '{id}'", index)
        if id in store:
            raise StoreLoadError(f"duplicate identifier '{id}'", index)
        values.setflags(write=False)
        store._entries[id] = values

    trailing = len(view) - offset
    if trailing:
        # Records carry no length of their own; surplus bytes after the last
        # record mean it held more values than the declared dim.
        last = max(count - 1, 0)
        raise DimMismatchError(
            f"dim mismatch: {trailing} trailing bytes after the last record "
            f"(declared dim {dim})",
            last,
        )
    logger.debug("Loaded %d embeddings of dim %d from '%s'", count, dim, source_name)
    return store


def load_store(path: Union[str, Path]) -> EmbeddingStore:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise StoreLoadError(f"cannot read {path}: {e}") from None
    return read_store(blob)


def save_store(store: EmbeddingStore, path: Union[str, Path]) -> None:
    Path(path).write_bytes(write_store(store))
