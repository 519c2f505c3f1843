"""Embedding providers: a precomputed ``.pire`` file or a remote HTTP encoder."""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DimensionMismatch, MissingEmbedding, ProviderUnreachable
from .store import EmbeddingStore, payload_sha256, store_read

log = logging.getLogger(__name__)

MAX_RETRIES = 3
BACKOFF_BASE = 0.25


@dataclass(frozen=True)
class ProviderConfig:
    kind: str  # "file" or "http"
    endpoint: str = ""
    path: str = ""
    model_id: str = ""
    batch_size: int = 32
    max_inflight: int = 4
    timeout: float = 30.0

    def __post_init__(self):
        if self.kind not in ("file", "http"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")
        if self.kind == "http" and not self.endpoint:
            raise ValueError("http provider needs an endpoint")
        if self.kind == "file" and not self.path:
            raise ValueError("file provider needs a path")

    @classmethod
    def parse(cls, spec: str, **options) -> "ProviderConfig":
        """Build a config from ``file:<path>`` or an ``http(s)://`` URL."""
        if spec.startswith("file:"):
            return cls(kind="file", path=spec[len("file:") :], **options)
        if spec.startswith(("http://", "https://")):
            return cls(kind="http", endpoint=spec.rstrip("/"), **options)
        raise ValueError(f"provider must be 'file:<path>' or an http(s) URL, got {spec!r}")


class Provider:
    """Base class; subclasses embed either by id (file) or by text (remote)."""

    by_id = False
    cacheable = True

    def __init__(self, model_id: str):
        self.model_id = model_id
        self.calls = 0
        self._calls_lock = threading.Lock()

    @property
    def provider_id(self) -> str:
        raise NotImplementedError

    def _count_call(self):
        with self._calls_lock:
            self.calls += 1

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        raise NotImplementedError

    def close(self):
        pass


class FileProvider(Provider):
    """Serves vectors from a precomputed store, looked up by item id."""

    by_id = True
    cacheable = False

    def __init__(self, path, model_id: str = ""):
        self.path = Path(path)
        self._store = store_read(self.path)
        super().__init__(model_id or f"file:{payload_sha256(self._store)[:16]}")

    @property
    def provider_id(self) -> str:
        return f"file:{self.path}"

    @property
    def dim(self) -> int:
        return self._store.dim

    def lookup(self, ids: list[str]) -> np.ndarray:
        self._count_call()
        missing = [i for i in ids if i not in self._store]
        if missing:
            raise MissingEmbedding(missing[0])
        return np.array([self._store[i] for i in ids], dtype=np.float32).reshape(len(ids), self.dim)


class HttpProvider(Provider):
    """Client for ``POST {endpoint}/embed``.

    Request ``{"model": str, "texts": [str]}``; response ``{"dim": int,
    "vectors": [[float]]}``. Non-200 answers and transport errors are
    retried three times with exponential backoff before giving up.
    """

    def __init__(self, endpoint: str, model_id: str, timeout: float = 30.0, sleep=time.sleep):
        import httpx

        super().__init__(model_id)
        self.endpoint = endpoint.rstrip("/")
        self._client = httpx.Client(timeout=timeout)
        self._sleep = sleep
        self._httpx = httpx

    @property
    def provider_id(self) -> str:
        return f"http:{self.endpoint}"

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        payload = {"model": self.model_id, "texts": list(texts)}
        last_error = "no attempt made"
        for attempt in range(MAX_RETRIES + 1):
            if attempt:
                self._sleep(BACKOFF_BASE * 2 ** (attempt - 1))
            self._count_call()
            try:
                response = self._client.post(f"{self.endpoint}/embed", json=payload)
            except self._httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                log.warning("embed request failed (attempt %d): %s", attempt + 1, last_error)
                continue
            if response.status_code != 200:
                last_error = f"HTTP {response.status_code}"
                log.warning("embed request failed (attempt %d): %s", attempt + 1, last_error)
                continue
            return _decode_response(response, len(texts))
        raise ProviderUnreachable(
            f"{self.endpoint}/embed failed after {MAX_RETRIES} retries: {last_error}"
        )

    def close(self):
        self._client.close()


def _decode_response(response, expected: int) -> np.ndarray:
    try:
        body = response.json()
        dim = int(body["dim"])
        vectors = body["vectors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ProviderUnreachable(f"malformed embed response: {exc}") from None
    if len(vectors) != expected:
        raise DimensionMismatch(f"requested {expected} vectors, provider returned {len(vectors)}")
    for vec in vectors:
        if len(vec) != dim:
            raise DimensionMismatch(f"provider declared dim {dim} but sent a vector of length {len(vec)}")
    return np.asarray(vectors, dtype=np.float64).reshape(expected, dim)


def make_provider(config: ProviderConfig, **kwargs) -> Provider:
    if config.kind == "file":
        return FileProvider(config.path, config.model_id)
    return HttpProvider(config.endpoint, config.model_id, timeout=config.timeout, **kwargs)
