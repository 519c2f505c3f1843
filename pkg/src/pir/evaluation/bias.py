"""Which document labels a retriever favours when queried without perspective."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from ..data import TaskBundle
from ..embedding import BundleStores
from ..errors import UnknownField
from ..retrieval import CorpusIndex, RetrievalResult
from ..scoring import ScoringMethod
from .run import retrieve_bundle

MODES = ("gold-hit", "all-topk")


@dataclass
class BiasTable:
    label_field: str
    mode: str
    k: int
    portions: dict[str, float] = field(default_factory=dict)
    support_counts: dict[str, int] = field(default_factory=dict)
    support: int = 0

    def to_dict(self) -> dict:
        return {
            "label_field": self.label_field,
            "mode": self.mode,
            "k": self.k,
            "support": self.support,
            "portions": dict(self.portions),
            "support_counts": dict(self.support_counts),
        }


def tally_bias(
    bundle: TaskBundle,
    results: list[RetrievalResult],
    k: int,
    label_field: str,
    mode: str = "gold-hit",
) -> BiasTable:
    """Label distribution over already-ranked results.

    ``gold-hit`` counts the label of the highest-ranked gold doc for every
    query that has one in its top ``k``. ``all-topk`` averages, over
    queries, the label distribution of each query's top ``k``. Docs without
    the label are ignored in both modes.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    labels = {d.doc_id: d.meta[label_field] for d in bundle.corpus if label_field in d.meta}
    if not labels:
        raise UnknownField(label_field)
    all_labels = sorted(set(labels.values()))

    counts: Counter = Counter()
    table = BiasTable(label_field, mode, k)
    if mode == "gold-hit":
        for res in results:
            gold = bundle.qrels.gold(res.query_id)
            first = next((d for d in res.top(k) if d in gold), None)
            if first is not None and first in labels:
                counts[labels[first]] += 1
                table.support += 1
        if table.support:
            table.portions = {lab: counts[lab] / table.support for lab in all_labels}
    else:
        sums = {lab: Fraction(0) for lab in all_labels}
        for res in results:
            tagged = [labels[d] for d in res.top(k) if d in labels]
            if not tagged:
                continue
            table.support += 1
            per_query = Counter(tagged)
            counts.update(per_query)
            for lab, n in per_query.items():
                sums[lab] += Fraction(n, len(tagged))
        if table.support:
            table.portions = {lab: float(sums[lab] / table.support) for lab in all_labels}
    table.support_counts = {lab: counts[lab] for lab in all_labels}
    return table


def bias_distribution(
    bundle: TaskBundle,
    index: CorpusIndex,
    method: ScoringMethod,
    k: int,
    label_field: str,
    mode: str = "gold-hit",
    stores: BundleStores | None = None,
    threads: int = 1,
) -> BiasTable:
    """Retrieve and tally; ``bundle`` should already be root-only."""
    if not any(label_field in d.meta for d in bundle.corpus):
        raise UnknownField(label_field)
    results = retrieve_bundle(bundle, index, method, k, stores, threads)
    return tally_bias(bundle, results, k, label_field, mode)
