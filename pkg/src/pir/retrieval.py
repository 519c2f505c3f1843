"""Exact top-k retrieval over an immutable in-memory corpus index."""

from __future__ import annotations

import hashlib
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import CorpusDoc
from .embedding import EmbeddingStore
from .errors import CacheMismatch, MissingEmbedding, PIRError
from .scoring import (
    BM25Params,
    CorpusStats,
    QueryParts,
    ScoringMethod,
    length_norm,
    norm_rows,
    reject_rows,
    score_rows,
    tokenize,
)


def perspective_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class LexicalStats:
    term_freqs: tuple[Counter, ...]
    doc_lengths: tuple[int, ...]
    corpus: CorpusStats
    postings: dict = field(default_factory=dict)  # term -> (doc rows, tf as float)

    @classmethod
    def build(cls, tokens: Sequence[Sequence[str]]) -> "LexicalStats":
        term_freqs = tuple(Counter(t) for t in tokens)
        rows: dict[str, list[int]] = {}
        tfs: dict[str, list[int]] = {}
        for i, tf in enumerate(term_freqs):
            for term, f in tf.items():
                rows.setdefault(term, []).append(i)
                tfs.setdefault(term, []).append(f)
        postings = {t: (np.array(rows[t]), np.array(tfs[t], dtype=np.float64)) for t in rows}
        return cls(term_freqs, tuple(len(t) for t in tokens), CorpusStats.build(tokens), postings)

    @property
    def avgdl(self) -> float:
        return self.corpus.avgdl


@dataclass(frozen=True, eq=False)
class CorpusIndex:
    doc_ids: tuple[str, ...]
    matrix: np.ndarray
    lexical_stats: LexicalStats
    bm25: BM25Params = field(default_factory=BM25Params)
    norms: np.ndarray = None
    doc_norms_bm25: np.ndarray = None

    def __post_init__(self):
        if self.norms is None:
            object.__setattr__(self, "norms", norm_rows(self.matrix))
        if self.doc_norms_bm25 is None:
            lengths = np.array(self.lexical_stats.doc_lengths, dtype=np.float64)
            object.__setattr__(self, "doc_norms_bm25", length_norm(self.bm25, lengths, self.lexical_stats.avgdl))

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self):
        return len(self.doc_ids)


@dataclass(frozen=True, eq=False)
class ProjectedCache:
    """Corpus rows with the component along one perspective removed."""

    key: str
    perspective: np.ndarray
    matrix: np.ndarray


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    ranked: tuple[tuple[str, float], ...]
    method: ScoringMethod
    error: PIRError | None = None

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.ranked]

    def top(self, k: int) -> list[str]:
        return [d for d, _ in self.ranked[:k]]


def build_index(
    corpus: Sequence[CorpusDoc], store: EmbeddingStore | None, bm25: BM25Params | None = None
) -> CorpusIndex:
    """Index docs in ascending doc_id order (the tie-break order).

    ``store=None`` builds a lexical-only index with zero-width vectors.
    """
    docs = sorted(corpus, key=lambda d: d.doc_id)
    if store is None:
        matrix = np.zeros((len(docs), 0))
    else:
        for d in docs:
            if d.doc_id not in store:
                raise MissingEmbedding(d.doc_id)
        if docs:
            matrix = np.array([store[d.doc_id] for d in docs], dtype=np.float64)
        else:
            matrix = np.zeros((0, store.dim))
    matrix.setflags(write=False)
    stats = LexicalStats.build([tokenize(d.text) for d in docs])
    return CorpusIndex(tuple(d.doc_id for d in docs), matrix, stats, bm25 or BM25Params())


def build_projected_cache(index: CorpusIndex, perspective_vec, perspective_text: str) -> ProjectedCache:
    p = np.asarray(perspective_vec, dtype=np.float64).ravel()
    matrix = reject_rows(index.matrix, p) if len(index) else index.matrix.copy()
    matrix.setflags(write=False)
    p.setflags(write=False)
    return ProjectedCache(perspective_key(perspective_text), p, matrix)


def rank(doc_ids: Sequence[str], scores: np.ndarray, k: int) -> tuple[tuple[str, float], ...]:
    """Top ``k`` by descending score, ties by position (ascending doc_id)."""
    n = scores.shape[0]
    k = min(k, n)
    if k == 0:
        return ()
    if k < n:
        threshold = np.partition(scores, n - k)[n - k]
        candidates = np.flatnonzero(scores >= threshold)
    else:
        candidates = np.arange(n)
    order = candidates[np.lexsort((candidates, -scores[candidates]))][:k]
    return tuple((doc_ids[i], float(scores[i])) for i in order)


class IndexBackend:
    """Search strategy over a :class:`CorpusIndex`.

    Only exact search is provided; an approximate backend would implement
    the same ``search`` contract.
    """

    def search(self, index, method, parts, k, cache=None):
        raise NotImplementedError


class ExactBackend(IndexBackend):
    def scores(self, index: CorpusIndex, method: ScoringMethod, parts, cache: ProjectedCache | None = None):
        if method.is_lexical:
            tokens = parts.tokens if isinstance(parts, QueryParts) else parts
            if tokens is None:
                raise ValueError("BM25 retrieval needs query tokens")
            return _bm25_scan(index, tokens)
        aux = None
        if cache is not None and method is ScoringMethod.PAP_PLUS:
            _check_cache(cache, parts)
            aux = cache.matrix
        if not len(index):
            return np.zeros(0)
        return score_rows(method, parts, index.matrix, aux, index.norms)

    def search(self, index, method, parts, k, cache=None):
        return rank(index.doc_ids, self.scores(index, method, parts, cache), k)


def _bm25_scan(index: CorpusIndex, tokens) -> np.ndarray:
    """Postings-driven BM25 over the whole corpus.

    Adds term contributions per doc in query-token order with the same
    operation order as :func:`bm25_score`, so both give identical floats.
    """
    stats = index.lexical_stats
    k1 = index.bm25.k1
    out = np.zeros(len(index), dtype=np.float64)
    for term in tokens:
        posting = stats.postings.get(term)
        if posting is None:
            continue
        rows, f = posting
        idf = stats.corpus.idf(term)
        out[rows] += idf * (f * (k1 + 1.0)) / (f + index.doc_norms_bm25[rows])
    return out


def _check_cache(cache: ProjectedCache, parts: QueryParts) -> None:
    if parts.perspective_text is not None and perspective_key(parts.perspective_text) != cache.key:
        raise CacheMismatch(f"cache built for another perspective than {parts.perspective_text!r}")
    if not np.array_equal(parts.p, cache.perspective):
        raise CacheMismatch("cache perspective vector differs from the query perspective")


DEFAULT_BACKEND = ExactBackend()


def top_k(
    index: CorpusIndex,
    method: ScoringMethod,
    parts,
    k: int,
    cache: ProjectedCache | None = None,
    query_id: str | None = None,
    backend: IndexBackend = DEFAULT_BACKEND,
) -> RetrievalResult:
    if k < 1:
        raise ValueError("k must be >= 1")
    if query_id is None:
        query_id = parts.query_id if isinstance(parts, QueryParts) else ""
    ranked = backend.search(index, method, parts, k, cache)
    return RetrievalResult(query_id, ranked, method)


def batch_retrieve(
    index: CorpusIndex,
    method: ScoringMethod,
    queries: Sequence,
    k: int,
    caches: dict[str, ProjectedCache] | None = None,
    threads: int = 1,
    backend: IndexBackend = DEFAULT_BACKEND,
) -> list[RetrievalResult]:
    """Run :func:`top_k` for every query, in input order.

    A query that fails yields an empty result carrying the exception in
    ``error``; the rest of the batch still runs. ``caches`` maps perspective
    keys to projected caches and is consulted for PAP+.
    """
    if k < 1:
        raise ValueError("k must be >= 1")

    def one(parts):
        qid = parts.query_id if isinstance(parts, QueryParts) else ""
        cache = None
        if caches and isinstance(parts, QueryParts) and parts.perspective_text is not None:
            cache = caches.get(perspective_key(parts.perspective_text))
        try:
            return top_k(index, method, parts, k, cache, backend=backend)
        except PIRError as exc:
            return RetrievalResult(qid, (), method, error=exc)

    if threads <= 1 or len(queries) <= 1:
        return [one(q) for q in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, queries))
