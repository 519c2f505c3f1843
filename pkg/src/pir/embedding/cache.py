"""Content-addressed on-disk cache of embedding vectors."""

from __future__ import annotations

import hashlib
import os
import tempfile
import threading
from pathlib import Path

import numpy as np

CACHE_ENV = "PIR_CACHE_DIR"
_F32 = np.dtype("<f4")


def default_cache_dir() -> Path:
    override = os.environ.get(CACHE_ENV)
    if override:
        return Path(override)
    base = os.environ.get("XDG_CACHE_HOME") or Path.home() / ".cache"
    return Path(base) / "pir"


def cache_key(model_id: str, text: str) -> str:
    return hashlib.sha256(model_id.encode("utf-8") + b"\x00" + text.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """Vectors keyed by ``sha256(model_id || 0x00 || text)``.

    Entries are raw little-endian float32 files, sharded by the first two
    hex digits of the key. Writes go through a temp file and an atomic
    rename, so concurrent writers of the same key are harmless.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else default_cache_dir()
        self._memory: dict[str, bytes] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.f32"

    def get(self, model_id: str, text: str):
        key = cache_key(model_id, text)
        with self._lock:
            raw = self._memory.get(key)
        if raw is None:
            try:
                raw = self._path(key).read_bytes()
            except FileNotFoundError:
                with self._lock:
                    self.misses += 1
                return None
            with self._lock:
                self._memory[key] = raw
        with self._lock:
            self.hits += 1
        return np.frombuffer(raw, dtype=_F32)

    def put(self, model_id: str, text: str, vector) -> None:
        key = cache_key(model_id, text)
        raw = np.asarray(vector, dtype=_F32).tobytes()
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
        with self._lock:
            self._memory[key] = raw
