"""Vector geometry and the catalogue of query/perspective composition scores.

Every dense scorer is written once, against a matrix of candidate rows, so
scoring one document and scanning a whole corpus run the same float64
arithmetic row by row. :func:`score` is the one-document view of
:func:`score_rows`.
"""

from __future__ import annotations

import enum
import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, ZeroPerspective

ZERO_NORM = 1e-12
ZERO_PERSPECTIVE = 1e-12


class ZeroNormWarning(RuntimeWarning):
    """Cosine against a (numerically) zero vector; scored as 0."""


class ScoringMethod(enum.Enum):
    BASELINE = "baseline"
    ADD = "add"
    ADD_PLUS = "add+"
    CONCAT = "concat"
    CONCAT_PLUS = "concat+"
    CAST = "cast"
    CAST_PLUS = "cast+"
    DUAL_SUM = "dual-sum"
    TRI_SUM = "tri-sum"
    PAP = "pap"
    PAP_PLUS = "pap+"
    BM25 = "bm25"

    @classmethod
    def parse(cls, name: str) -> "ScoringMethod":
        key = name.strip().lower().replace("_", "-")
        aliases = {"concat.": "concat", "concat.+": "concat+", "trisum": "tri-sum", "dualsum": "dual-sum"}
        key = aliases.get(key, key)
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown scoring method {name!r}; choose from {', '.join(m.value for m in cls)}")

    @property
    def is_lexical(self) -> bool:
        return self is ScoringMethod.BM25

    @property
    def transforms_corpus(self) -> bool:
        return self in _CORPUS_SIDE

    @property
    def needs_perspective(self) -> bool:
        """Methods for which a zero perspective is a hard error."""
        return self in _STRICT_PERSPECTIVE

    def __str__(self):
        return self.value


_CORPUS_SIDE = frozenset(
    {ScoringMethod.ADD_PLUS, ScoringMethod.CONCAT_PLUS, ScoringMethod.CAST_PLUS, ScoringMethod.PAP_PLUS}
)
_STRICT_PERSPECTIVE = frozenset(
    {ScoringMethod.CAST, ScoringMethod.CAST_PLUS, ScoringMethod.PAP, ScoringMethod.PAP_PLUS}
)
DENSE_METHODS = tuple(m for m in ScoringMethod if not m.is_lexical)


@dataclass(frozen=True)
class QueryParts:
    """Embeddings of a query, its root and its perspective.

    ``query_id``, ``perspective_text`` and ``tokens`` are optional context:
    retrieval results are labelled with the id, projected caches are checked
    against the perspective text, and BM25 reads the tokens.
    """

    q: np.ndarray
    r: np.ndarray
    p: np.ndarray
    query_id: str = ""
    perspective_text: str | None = None
    tokens: tuple[str, ...] | None = None

    def __post_init__(self):
        for name in ("q", "r", "p"):
            vec = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if not np.isfinite(vec).all():
                raise ValueError(f"query part {name} has non-finite entries")
            object.__setattr__(self, name, vec)
        if not (self.q.shape == self.r.shape == self.p.shape):
            raise DimensionMismatch(
                f"query parts differ in dimension: q={self.q.shape[0]} r={self.r.shape[0]} p={self.p.shape[0]}"
            )

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    def scaled(self, alpha: float) -> "QueryParts":
        return QueryParts(alpha * self.q, alpha * self.r, alpha * self.p, self.query_id, self.perspective_text, self.tokens)


# ---------------------------------------------------------------------------
# row kernels (float64, one reduction per row)


def _as_rows(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    return m.reshape(1, -1) if m.ndim == 1 else m


def dot_rows(v: np.ndarray, rows: np.ndarray) -> np.ndarray:
    return (rows * v).sum(axis=1)


def norm_rows(rows: np.ndarray) -> np.ndarray:
    return np.sqrt((rows * rows).sum(axis=1))


def cosine_rows(v: np.ndarray, rows: np.ndarray, row_norms=None) -> np.ndarray:
    """Cosine of ``v`` against every row; 0 wherever either norm is below 1e-12.

    ``row_norms`` may carry precomputed :func:`norm_rows` of ``rows``.
    """
    v = np.asarray(v, dtype=np.float64)
    rows = _as_rows(rows)
    if rows.shape[1] != v.shape[0]:
        raise DimensionMismatch(f"vector dim {v.shape[0]} vs rows dim {rows.shape[1]}")
    vnorm = math.sqrt(float((v * v).sum()))
    rnorm = norm_rows(rows) if row_norms is None else row_norms
    if vnorm < ZERO_NORM:
        return np.zeros(rows.shape[0], dtype=np.float64)
    ok = rnorm >= ZERO_NORM
    if ok.all():
        return dot_rows(v, rows) / (vnorm * rnorm)
    out = np.zeros(rows.shape[0], dtype=np.float64)
    out[ok] = dot_rows(v, rows[ok]) / (vnorm * rnorm[ok])
    return out


def reject_rows(rows: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Remove each row's component along ``p``: ``c - (c.p / |p|^2) p``."""
    rows = _as_rows(rows)
    p = np.asarray(p, dtype=np.float64)
    if rows.shape[1] != p.shape[0]:
        raise DimensionMismatch(f"rows dim {rows.shape[1]} vs perspective dim {p.shape[0]}")
    pp = float((p * p).sum())
    if pp < ZERO_PERSPECTIVE:
        raise ZeroPerspective(f"perspective vector has squared norm {pp:.3g}")
    coef = dot_rows(p, rows) / pp
    return rows - coef[:, None] * p


# ---------------------------------------------------------------------------
# scalar API


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"cosine of vectors with dims {a.shape[0]} and {b.shape[0]}")
    if math.sqrt(float((a * a).sum())) < ZERO_NORM or math.sqrt(float((b * b).sum())) < ZERO_NORM:
        warnings.warn("cosine with a zero-norm vector scored as 0", ZeroNormWarning, stacklevel=2)
        return 0.0
    return float(cosine_rows(a, b[None, :])[0])


def reject(v, p) -> np.ndarray:
    """Component of ``v`` orthogonal to ``p``."""
    v = np.asarray(v, dtype=np.float64).ravel()
    return reject_rows(v[None, :], p)[0]


# ---------------------------------------------------------------------------
# composition scores


def corpus_side(method: ScoringMethod, rows: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Candidate rows as the method compares them (tiling / shifting / projecting)."""
    rows = _as_rows(rows)
    if method is ScoringMethod.ADD_PLUS:
        return rows + p
    if method is ScoringMethod.CONCAT:
        return np.concatenate([rows, rows], axis=1)
    if method is ScoringMethod.CONCAT_PLUS:
        return np.concatenate([rows, np.broadcast_to(p, rows.shape)], axis=1)
    if method is ScoringMethod.CAST_PLUS:
        return rows - p
    if method is ScoringMethod.PAP_PLUS:
        return reject_rows(rows, p)
    return rows


def _check_perspective(method, p):
    if method.needs_perspective and float((p * p).sum()) < ZERO_PERSPECTIVE:
        raise ZeroPerspective(f"{method.value} needs a non-zero perspective vector")


def score_rows(method: ScoringMethod, parts: QueryParts, rows, aux_rows=None, row_norms=None) -> np.ndarray:
    """Score every candidate row under ``method``.

    ``aux_rows`` optionally supplies the precomputed corpus-side rows
    (see :func:`corpus_side`) for the ``+`` variants and concat.
    ``row_norms`` are precomputed norms of ``rows``, used only by methods
    that compare against the untransformed rows.
    """
    if method.is_lexical:
        raise ValueError("BM25 is scored over tokens, use bm25_score")
    rows = _as_rows(rows)
    if rows.shape[1] != parts.dim:
        raise DimensionMismatch(f"query dim {parts.dim} vs corpus dim {rows.shape[1]}")
    q, r, p = parts.q, parts.r, parts.p
    _check_perspective(method, p)

    if method.transforms_corpus or method is ScoringMethod.CONCAT:
        side = corpus_side(method, rows, p) if aux_rows is None else _as_rows(aux_rows)
        norms = norm_rows(side)
    else:
        side = rows
        norms = norm_rows(side) if row_norms is None else row_norms

    if method is ScoringMethod.BASELINE:
        return cosine_rows(q, side, norms)
    if method in (ScoringMethod.ADD, ScoringMethod.ADD_PLUS):
        return cosine_rows(r + p, side, norms)
    if method in (ScoringMethod.CONCAT, ScoringMethod.CONCAT_PLUS):
        return cosine_rows(np.concatenate([r, p]), side, norms)
    if method in (ScoringMethod.CAST, ScoringMethod.CAST_PLUS):
        return cosine_rows(q - p, side, norms)
    if method is ScoringMethod.DUAL_SUM:
        return cosine_rows(r, side, norms) + cosine_rows(p, side, norms)
    if method is ScoringMethod.TRI_SUM:
        return cosine_rows(r, side, norms) + cosine_rows(p, side, norms) + cosine_rows(q, side, norms)
    if method in (ScoringMethod.PAP, ScoringMethod.PAP_PLUS):
        return cosine_rows(reject(q, p), side, norms)
    raise AssertionError(method)


def score(method: ScoringMethod, parts: QueryParts, c, c_aux=None) -> float:
    c = np.asarray(c, dtype=np.float64).ravel()
    aux = None if c_aux is None else np.asarray(c_aux, dtype=np.float64).ravel()[None, :]
    return float(score_rows(method, parts, c[None, :], aux)[0])


# ---------------------------------------------------------------------------
# lexical baseline

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercased runs of Unicode letters and digits, in order."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class BM25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0 <= self.b <= 1:
            raise ValueError("b must lie in [0, 1]")


@dataclass(frozen=True)
class CorpusStats:
    n_docs: int
    df: Mapping[str, int]
    avgdl: float

    @classmethod
    def build(cls, docs: Iterable[Sequence[str]]) -> "CorpusStats":
        df: Counter = Counter()
        total = 0
        n = 0
        for tokens in docs:
            n += 1
            total += len(tokens)
            df.update(set(tokens))
        return cls(n, dict(df), total / n if n else 0.0)

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        return max(0.0, math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5)))


def length_norm(params: BM25Params, length, avgdl: float):
    """``k1 * (1 - b + b * len / avgdl)``; works on scalars and arrays."""
    if not avgdl:
        return params.k1 + 0.0 * length
    return params.k1 * (1.0 - params.b + params.b * length / avgdl)


def bm25_score(params: BM25Params, query_tokens: Sequence[str], doc_tokens, stats: CorpusStats) -> float:
    """Okapi BM25; each query token occurrence contributes one term.

    ``doc_tokens`` may be a token sequence or a precomputed ``Counter``;
    document length is the total token count.
    """
    tf = doc_tokens if isinstance(doc_tokens, Counter) else Counter(doc_tokens)
    if not query_tokens or not tf:
        return 0.0
    norm = length_norm(params, sum(tf.values()), stats.avgdl)
    total = 0.0
    for term in query_tokens:
        f = tf.get(term, 0)
        if f:
            total += stats.idf(term) * (f * (params.k1 + 1.0)) / (f + norm)
    return total
