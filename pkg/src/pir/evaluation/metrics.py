"""Recall@k, p-Recall@k and the max uni-gram overlap answer metric.

Means are accumulated as exact fractions and rounded once, so the value
does not depend on summation order.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

from ..data import QrelSet, TaskBundle
from ..errors import MissingResult, UnknownQuery
from ..retrieval import RetrievalResult
from ..scoring import tokenize


def success(result: RetrievalResult, gold: Iterable[str], k: int) -> bool:
    """True when any gold doc appears among the first ``k`` results."""
    gold = set(gold)
    return any(doc_id in gold for doc_id in result.top(k))


def recall_at_k(results: Sequence[RetrievalResult], qrels: QrelSet, k: int) -> float:
    """Fraction of queries with at least one gold doc in their top ``k``."""
    if not results:
        return 0.0
    hits = 0
    for res in results:
        if res.query_id not in qrels:
            raise UnknownQuery(res.query_id)
        hits += success(res, qrels.gold(res.query_id), k)
    return hits / len(results)


def per_root_success(results: Sequence[RetrievalResult], bundle: TaskBundle, k: int) -> dict[str, Fraction]:
    by_id = {r.query_id: r for r in results}
    out = {}
    for group in sorted(bundle.groups, key=lambda g: g.root_id):
        hits = 0
        for qid in group.query_ids:
            if qid not in by_id:
                raise MissingResult(qid)
            hits += success(by_id[qid], bundle.qrels.gold(qid), k)
        out[group.root_id] = Fraction(hits, len(group.query_ids))
    return out


def p_recall_at_k(results: Sequence[RetrievalResult], bundle: TaskBundle, k: int) -> float:
    """Mean over roots of the mean per-perspective success at cutoff ``k``."""
    per_root = per_root_success(results, bundle, k)
    if not per_root:
        return 0.0
    return float(sum(per_root.values(), Fraction(0)) / len(per_root))


def qa_f1(pred: str, golds: Sequence[str]) -> float:
    """Max over golds of the token-set intersection over union with ``pred``.

    Two empty token sets count as a perfect match.
    """
    if not golds:
        raise ValueError("qa_f1 needs at least one gold text")
    pred_set = set(tokenize(pred))
    best = 0.0
    for gold in golds:
        gold_set = set(tokenize(gold))
        union = pred_set | gold_set
        value = 1.0 if not union else len(pred_set & gold_set) / len(union)
        best = max(best, value)
    return best
