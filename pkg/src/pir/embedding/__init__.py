"""Dense vectors for bundle texts, via pluggable providers and a shared cache."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from ..data import TaskBundle
from ..errors import DimensionMismatch, EmptyText
from .cache import CACHE_ENV, EmbeddingCache, cache_key, default_cache_dir
from .providers import FileProvider, HttpProvider, Provider, ProviderConfig, make_provider
from .store import EmbeddingStore, payload_sha256, store_read, store_write

__all__ = [
    "BundleStores",
    "CACHE_ENV",
    "EmbeddingCache",
    "EmbeddingStore",
    "FileProvider",
    "HttpProvider",
    "Provider",
    "ProviderConfig",
    "cache_key",
    "default_cache_dir",
    "embed_bundle",
    "embed_texts",
    "make_provider",
    "payload_sha256",
    "store_read",
    "store_write",
]

# id prefixes used when all four kinds of vector live in one file
KINDS = ("query", "root", "perspective", "doc")
STORE_FILES = {
    "query": "queries.pire",
    "root": "roots.pire",
    "perspective": "perspectives.pire",
    "doc": "corpus.pire",
}


def embed_texts(
    provider,
    items: Iterable[tuple[str, str]],
    cache: EmbeddingCache | None = None,
    batch_size: int | None = None,
    max_inflight: int | None = None,
) -> EmbeddingStore:
    """Embed ``(id, text)`` pairs into a store keyed by id.

    ``provider`` is a :class:`ProviderConfig` or a live :class:`Provider`.
    Text providers see each distinct text at most once per call, and not at
    all when ``cache`` already holds it.
    """
    if isinstance(provider, ProviderConfig):
        config = provider
        live = make_provider(config)
        try:
            return embed_texts(
                live,
                items,
                cache,
                batch_size or config.batch_size,
                max_inflight or config.max_inflight,
            )
        finally:
            live.close()

    items = list(items)
    seen = set()
    for item_id, text in items:
        if item_id in seen:
            raise ValueError(f"duplicate id {item_id!r}")
        seen.add(item_id)
        if not text:
            raise EmptyText(item_id)
    ids = [i for i, _ in items]
    provenance = {"provider_id": provider.provider_id, "model_id": provider.model_id}

    if provider.by_id:
        if not items:
            return EmbeddingStore(provider.dim, [], **provenance)
        return EmbeddingStore(provider.dim, ids, provider.lookup(ids), **provenance)

    batch_size = batch_size or 32
    max_inflight = max_inflight or 1
    use_cache = cache is not None and provider.cacheable
    vectors: dict[str, np.ndarray] = {}
    pending = []
    for text in dict.fromkeys(t for _, t in items):
        hit = cache.get(provider.model_id, text) if use_cache else None
        if hit is None:
            pending.append(text)
        else:
            vectors[text] = hit

    batches = [pending[i : i + batch_size] for i in range(0, len(pending), batch_size)]

    def run(batch):
        out = np.asarray(provider.embed_batch(batch), dtype=np.float32)
        if use_cache and np.isfinite(out).all():
            for text, vec in zip(batch, out):
                cache.put(provider.model_id, text, vec)
        return out

    if batches:
        workers = min(max_inflight, len(batches))
        if workers == 1:
            outputs = [run(b) for b in batches]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outputs = list(pool.map(run, batches))
        for batch, out in zip(batches, outputs):
            for text, vec in zip(batch, out):
                vectors[text] = vec

    dims = {v.shape[0] for v in vectors.values()}
    if len(dims) > 1:
        raise DimensionMismatch(f"provider returned inconsistent dimensions {sorted(dims)}")
    if not dims:
        raise ValueError("cannot infer dimension of an empty request")
    dim = dims.pop()
    matrix = np.array([vectors[t] for _, t in items], dtype=np.float32).reshape(len(items), dim)
    return EmbeddingStore(dim, ids, matrix, **provenance)


def expected_batches(n_texts: int, batch_size: int) -> int:
    return math.ceil(n_texts / batch_size)


@dataclass(frozen=True)
class BundleStores:
    """Vectors for one bundle: queries and perspectives keyed by query_id,
    roots by root_id, corpus by doc_id."""

    queries: EmbeddingStore
    roots: EmbeddingStore
    perspectives: EmbeddingStore
    corpus: EmbeddingStore

    def __post_init__(self):
        dims = {s.dim for s in self.as_dict().values()}
        if len(dims) != 1:
            raise DimensionMismatch(f"bundle stores disagree on dimension: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.corpus.dim

    def as_dict(self) -> dict[str, EmbeddingStore]:
        return {
            "query": self.queries,
            "root": self.roots,
            "perspective": self.perspectives,
            "doc": self.corpus,
        }

    def write(self, directory) -> list[Path]:
        directory = Path(directory)
        paths = []
        for kind, store in self.as_dict().items():
            path = directory / STORE_FILES[kind]
            store_write(store, path)
            paths.append(path)
        return paths

    @classmethod
    def read(cls, directory) -> "BundleStores":
        directory = Path(directory)
        loaded = {kind: store_read(directory / name) for kind, name in STORE_FILES.items()}
        return cls(loaded["query"], loaded["root"], loaded["perspective"], loaded["doc"])

    def combined(self) -> EmbeddingStore:
        """Single store with ``kind:id`` keys, the layout the file provider reads."""
        ids, rows = [], []
        for kind, store in self.as_dict().items():
            ids.extend(f"{kind}:{i}" for i in store.ids)
            rows.append(store.matrix)
        return EmbeddingStore(self.dim, ids, np.concatenate(rows, axis=0))


def bundle_items(bundle: TaskBundle) -> list[tuple[str, str, str]]:
    """``(kind, id, text)`` for every text a bundle needs embedded."""
    items = [("query", q.query_id, q.query_text) for q in bundle.queries]
    roots = {}
    for q in bundle.queries:
        roots.setdefault(q.root_id, q.root_text)
    items += [("root", rid, text) for rid, text in roots.items()]
    items += [("perspective", q.query_id, q.perspective_text) for q in bundle.queries]
    items += [("doc", d.doc_id, d.text) for d in bundle.corpus]
    return items


def embed_bundle(
    bundle: TaskBundle,
    provider,
    cache: EmbeddingCache | None = None,
    batch_size: int | None = None,
    max_inflight: int | None = None,
) -> BundleStores:
    """Embed queries, roots, bare perspective phrases and docs in one request set."""
    triples = bundle_items(bundle)
    store = embed_texts(
        provider,
        [(f"{k}:{i}", t) for k, i, t in triples],
        cache=cache,
        batch_size=batch_size,
        max_inflight=max_inflight,
    )
    parts = {}
    for kind in KINDS:
        keys = [(i, f"{k}:{i}") for k, i, _ in triples if k == kind]
        parts[kind] = EmbeddingStore(
            store.dim,
            [i for i, _ in keys],
            store.subset([key for _, key in keys]).matrix,
            store.provider_id,
            store.model_id,
        )
    return BundleStores(parts["query"], parts["root"], parts["perspective"], parts["doc"])
