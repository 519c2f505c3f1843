"""Evaluate one scoring method over a bundle."""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..data import QrelSet, TaskBundle, strip_perspective
from ..embedding import BundleStores
from ..errors import ZeroPerspective
from ..retrieval import (
    CorpusIndex,
    ProjectedCache,
    RetrievalResult,
    batch_retrieve,
    build_projected_cache,
    perspective_key,
)
from ..scoring import QueryParts, ScoringMethod, tokenize
from .metrics import p_recall_at_k, per_root_success, recall_at_k


@dataclass
class EvalReport:
    task: str
    method: ScoringMethod
    per_k: dict[int, dict[str, float]]
    per_root: dict[str, float] = field(default_factory=dict)
    bias: object = None
    runtime_ms: int = 0
    error_counts: dict[str, int] = field(default_factory=dict)
    n_queries: int = 0

    @property
    def ks(self) -> list[int]:
        return sorted(self.per_k)


def check_ks(ks) -> list[int]:
    ks = [int(k) for k in ks]
    if not ks:
        raise ValueError("at least one cutoff k is required")
    if any(k < 1 for k in ks):
        raise ValueError("cutoffs must be positive")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("cutoffs must be strictly increasing")
    return ks


def query_parts(bundle: TaskBundle, stores: BundleStores | None) -> list[QueryParts]:
    """Assemble scorer inputs for every query of ``bundle``.

    Root-only queries (empty perspective) use the root vector as the query
    and a zero perspective. Without stores only lexical scoring is possible,
    so the vectors are left empty.
    """
    parts = []
    empty = np.zeros(0)
    for q in bundle.queries:
        tokens = tuple(tokenize(q.query_text))
        if stores is None:
            parts.append(QueryParts(empty, empty, empty, q.query_id, q.perspective_text or None, tokens))
            continue
        root = stores.roots[q.root_id]
        if q.perspective_text:
            qv = stores.queries[q.query_id]
            pv = stores.perspectives[q.query_id]
            ptext = q.perspective_text
        else:
            qv, pv, ptext = root, np.zeros(stores.dim), None
        parts.append(QueryParts(qv, root, pv, q.query_id, ptext, tokens))
    return parts


def projected_caches(index: CorpusIndex, parts: list[QueryParts]) -> dict[str, ProjectedCache]:
    """One projected corpus per distinct perspective text.

    A text whose queries carry differing vectors gets no cache, so those
    queries are projected inline.
    """
    by_text: dict[str, list[QueryParts]] = {}
    for p in parts:
        if p.perspective_text is not None:
            by_text.setdefault(p.perspective_text, []).append(p)
    caches = {}
    for text, members in by_text.items():
        ref = members[0].p
        if not all(np.array_equal(m.p, ref) for m in members[1:]):
            continue
        try:
            caches[perspective_key(text)] = build_projected_cache(index, ref, text)
        except ZeroPerspective:
            continue
    return caches


def retrieve_bundle(
    bundle: TaskBundle,
    index: CorpusIndex,
    method: ScoringMethod,
    k: int,
    stores: BundleStores | None = None,
    threads: int = 1,
    use_cache: bool = True,
) -> list[RetrievalResult]:
    if stores is None and not method.is_lexical:
        raise ValueError(f"{method.value} needs embedding stores")
    parts = query_parts(bundle, stores)
    caches = projected_caches(index, parts) if use_cache and method is ScoringMethod.PAP_PLUS else None
    return batch_retrieve(index, method, parts, k, caches=caches, threads=threads)


def evaluate_results(bundle: TaskBundle, method: ScoringMethod, results, ks) -> EvalReport:
    ks = check_ks(ks)
    qrels = QrelSet({q.query_id: bundle.qrels.gold(q.query_id) for q in bundle.queries})
    per_k = {
        k: {"recall": recall_at_k(results, qrels, k), "p_recall": p_recall_at_k(results, bundle, k)}
        for k in ks
    }
    per_root = {root: float(v) for root, v in per_root_success(results, bundle, ks[0]).items()}
    errors = Counter(type(r.error).__name__ for r in results if r.error is not None)
    return EvalReport(
        task=bundle.task_name,
        method=method,
        per_k=per_k,
        per_root=per_root,
        error_counts=dict(sorted(errors.items())),
        n_queries=len(results),
    )


def evaluate_method(
    bundle: TaskBundle,
    index: CorpusIndex,
    method: ScoringMethod,
    ks,
    stores: BundleStores | None = None,
    threads: int = 1,
    use_cache: bool = True,
) -> EvalReport:
    """Retrieve at ``max(ks)`` once and score every cutoff from that ranking."""
    ks = check_ks(ks)
    start = time.perf_counter()
    results = retrieve_bundle(bundle, index, method, ks[-1], stores, threads, use_cache)
    report = evaluate_results(bundle, method, results, ks)
    report.runtime_ms = int(round((time.perf_counter() - start) * 1000))
    return report


def paired_perspective_eval(
    bundle: TaskBundle,
    index: CorpusIndex,
    method: ScoringMethod,
    ks,
    stores: BundleStores | None = None,
    threads: int = 1,
) -> dict[str, EvalReport]:
    """Same settings on the bundle and on its root-only derivative."""
    return {
        "with": evaluate_method(bundle, index, method, ks, stores, threads),
        "without": evaluate_method(strip_perspective(bundle), index, method, ks, stores, threads),
    }
