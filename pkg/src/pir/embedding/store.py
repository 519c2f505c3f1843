"""In-memory embedding stores and the ``.pire`` binary format.

Layout (all integers little-endian)::

    b"PIRE"  u32 version=1  u32 dim  u64 count
    count x ( u16 id_len  id_bytes(utf-8)  dim x f32le )
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from ..errors import (
    BadMagic,
    DimensionMismatch,
    MissingEmbedding,
    NonFiniteVector,
    TruncatedFile,
    VersionUnsupported,
)

MAGIC = b"PIRE"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_ID_LEN = struct.Struct("<H")
_F32 = np.dtype("<f4")


class EmbeddingStore(Mapping):
    """Immutable id -> float32 vector mapping with a fixed dimension.

    Row order is insertion order; it is preserved by the binary format.
    Provenance (provider / model ids) is informational only and does not
    take part in equality.
    """

    def __init__(self, dim: int, ids: Iterable[str], matrix=None, provider_id="", model_id=""):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = int(dim)
        self.ids = tuple(ids)
        if matrix is None:
            matrix = np.zeros((len(self.ids), self.dim), dtype=_F32)
        matrix = np.ascontiguousarray(np.asarray(matrix, dtype=_F32).reshape(len(self.ids), self.dim))
        if not np.isfinite(matrix).all():
            bad = self.ids[int(np.flatnonzero(~np.isfinite(matrix).all(axis=1))[0])]
            raise NonFiniteVector(f"vector for id {bad!r} has non-finite entries")
        matrix.setflags(write=False)
        self.matrix = matrix
        self._row = {}
        for i, item_id in enumerate(self.ids):
            if item_id in self._row:
                raise ValueError(f"duplicate id {item_id!r}")
            self._row[item_id] = i
        self.provider_id = provider_id
        self.model_id = model_id

    @classmethod
    def from_items(cls, items: Iterable[tuple[str, object]], dim=None, **provenance) -> "EmbeddingStore":
        items = list(items)
        if dim is None:
            if not items:
                raise ValueError("dim is required for an empty store")
            dim = len(items[0][1])
        vectors = []
        for item_id, vec in items:
            vec = np.asarray(vec, dtype=np.float64).ravel()
            if vec.shape[0] != dim:
                raise DimensionMismatch(f"id {item_id!r}: expected dim {dim}, got {vec.shape[0]}")
            vectors.append(vec)
        matrix = np.array(vectors, dtype=_F32).reshape(len(items), dim)
        return cls(dim, [i for i, _ in items], matrix, **provenance)

    def __getitem__(self, item_id: str) -> np.ndarray:
        try:
            return self.matrix[self._row[item_id]]
        except KeyError:
            raise MissingEmbedding(item_id) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self.ids)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, item_id) -> bool:
        return item_id in self._row

    def __eq__(self, other):
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.ids == other.ids
            and self.matrix.tobytes() == other.matrix.tobytes()
        )

    __hash__ = None

    def __repr__(self):
        return f"EmbeddingStore(dim={self.dim}, count={len(self)})"

    def subset(self, ids: Iterable[str]) -> "EmbeddingStore":
        ids = list(ids)
        rows = [self._row[i] if i in self._row else _missing(i) for i in ids]
        return EmbeddingStore(self.dim, ids, self.matrix[rows], self.provider_id, self.model_id)

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, VERSION, self.dim, len(self.ids))]
        for item_id, row in zip(self.ids, self.matrix):
            raw = item_id.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"id too long for the store format: {item_id[:40]!r}...")
            parts.append(_ID_LEN.pack(len(raw)))
            parts.append(raw)
            parts.append(row.astype(_F32, copy=False).tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EmbeddingStore":
        if len(data) < 4:
            raise TruncatedFile("file shorter than the magic bytes")
        if data[:4] != MAGIC:
            raise BadMagic(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
        if len(data) < _HEADER.size:
            raise TruncatedFile("header truncated")
        _, version, dim, count = _HEADER.unpack_from(data, 0)
        if version != VERSION:
            raise VersionUnsupported(f"store version {version} is not supported")
        if dim == 0:
            raise TruncatedFile("store header declares dim 0")
        offset = _HEADER.size
        row_bytes = dim * 4
        ids = []
        matrix = np.empty((count, dim), dtype=_F32) if count * row_bytes <= len(data) else None
        if matrix is None:
            raise TruncatedFile(f"header declares {count} records but file holds {len(data)} bytes")
        for i in range(count):
            if offset + 2 > len(data):
                raise TruncatedFile(f"record {i}: id length truncated")
            (id_len,) = _ID_LEN.unpack_from(data, offset)
            offset += 2
            end = offset + id_len + row_bytes
            if end > len(data):
                raise TruncatedFile(f"record {i}: payload truncated")
            ids.append(data[offset : offset + id_len].decode("utf-8"))
            offset += id_len
            matrix[i] = np.frombuffer(data, dtype=_F32, count=dim, offset=offset)
            offset += row_bytes
        if offset != len(data):
            raise TruncatedFile(f"{len(data) - offset} trailing bytes after last record")
        return cls(dim, ids, matrix)


def _missing(item_id):
    raise MissingEmbedding(item_id)


def store_write(store: EmbeddingStore, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(store.to_bytes())
    tmp.replace(path)


def store_read(path) -> EmbeddingStore:
    return EmbeddingStore.from_bytes(Path(path).read_bytes())


def payload_sha256(store: EmbeddingStore) -> str:
    return hashlib.sha256(store.to_bytes()).hexdigest()
