import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pir.errors import DimensionMismatch, ZeroPerspective
from pir.scoring import (
    DENSE_METHODS,
    BM25Params,
    CorpusStats,
    QueryParts,
    ScoringMethod,
    ZeroNormWarning,
    bm25_score,
    cosine,
    reject,
    score,
    tokenize,
)

M = ScoringMethod


def finite_vectors(dim):
    return arrays(np.float64, dim, elements=st.floats(-100, 100, allow_nan=False, width=64))


class TestCosine:
    @pytest.mark.parametrize(
        "a,b,expected",
        [([1, 0], [1, 0], 1.0), ([1, 0], [0, 1], 0.0), ([1, 2], [2, 1], 0.8)],
    )
    def test_examples(self, a, b, expected):
        assert cosine(a, b) == pytest.approx(expected, abs=1e-12)

    def test_zero_norm_returns_zero_with_warning(self):
        with pytest.warns(ZeroNormWarning):
            assert cosine([0, 0], [1, 0]) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine([1, 0], [1, 0, 0])


class TestReject:
    def test_axis_removal(self):
        assert reject([1, 2, 3], [1, 0, 0]).tolist() == [0, 2, 3]

    def test_parallel_gives_zero(self):
        assert np.allclose(reject([2, 4], [1, 2]), 0.0)

    def test_scaled_negative_perspective(self):
        assert np.allclose(reject([1, 1], [-5, -5]), 0.0)

    def test_zero_perspective(self):
        with pytest.raises(ZeroPerspective):
            reject([1, 2], [0, 0])

    @settings(max_examples=200)
    @given(st.sampled_from([2, 8, 64]).flatmap(lambda d: st.tuples(finite_vectors(d), finite_vectors(d))))
    def test_orthogonal(self, pair):
        v, p = pair
        assume(p @ p >= 1e-6)
        assert abs(reject(v, p) @ p) <= 1e-6 * np.linalg.norm(v) * np.linalg.norm(p) + 1e-12

    @settings(max_examples=200)
    @given(st.integers(2, 32).flatmap(lambda d: st.tuples(finite_vectors(d), finite_vectors(d))))
    def test_idempotent(self, pair):
        v, p = pair
        assume(p @ p >= 1e-6)
        once = reject(v, p)
        assert np.allclose(reject(once, p), once, atol=1e-6)

    @settings(max_examples=200)
    @given(
        st.integers(2, 32).flatmap(lambda d: st.tuples(finite_vectors(d), finite_vectors(d))),
        st.floats(0.01, 100) | st.floats(-100, -0.01),
    )
    def test_scale_invariant(self, pair, alpha):
        v, p = pair
        assume(p @ p >= 1e-3)
        assert np.allclose(reject(v, alpha * p), reject(v, p), atol=1e-6)


class TestComposition:
    def test_contamination_fixture(self, contamination):
        f = contamination
        parts = QueryParts(f["q"], f["r"], f["p"])
        assert score(M.BASELINE, parts, f["c2"]) == pytest.approx(3 / math.sqrt(20), abs=1e-12)
        assert score(M.BASELINE, parts, f["c1"]) == pytest.approx(1 / math.sqrt(20), abs=1e-12)
        assert score(M.PAP, parts, f["c1"]) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
        assert score(M.PAP, parts, f["c2"]) == pytest.approx(0.0, abs=1e-12)

    def test_formulas(self):
        rng = np.random.default_rng(3)
        q, r, p, c = rng.standard_normal((4, 6))
        parts = QueryParts(q, r, p)

        def cos(a, b):
            return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

        def rej(v):
            return v - (v @ p) / (p @ p) * p

        expected = {
            M.BASELINE: cos(q, c),
            M.ADD: cos(r + p, c),
            M.ADD_PLUS: cos(r + p, c + p),
            M.CONCAT: cos(np.r_[r, p], np.r_[c, c]),
            M.CONCAT_PLUS: cos(np.r_[r, p], np.r_[c, p]),
            M.CAST: cos(q - p, c),
            M.CAST_PLUS: cos(q - p, c - p),
            M.DUAL_SUM: cos(r, c) + cos(p, c),
            M.TRI_SUM: cos(r, c) + cos(p, c) + cos(q, c),
            M.PAP: cos(rej(q), c),
            M.PAP_PLUS: cos(rej(q), rej(c)),
        }
        assert set(expected) == set(DENSE_METHODS)
        for method, value in expected.items():
            assert score(method, parts, c) == pytest.approx(value, abs=1e-12), method

    def test_precomputed_aux_matches_inline(self):
        rng = np.random.default_rng(4)
        q, r, p, c = rng.standard_normal((4, 5))
        parts = QueryParts(q, r, p)
        aux = c - (c @ p) / (p @ p) * p
        assert score(M.PAP_PLUS, parts, c, aux) == pytest.approx(score(M.PAP_PLUS, parts, c), abs=1e-12)

    def test_pap_equals_baseline_when_orthogonal(self):
        q = np.array([1.0, 2.0, 0.0])
        p = np.array([0.0, 0.0, 3.0])
        c = np.array([0.5, -1.0, 2.0])
        parts = QueryParts(q, q, p)
        assert score(M.PAP, parts, c) == score(M.BASELINE, parts, c)

    def test_dual_sum_two(self):
        c = np.array([0.3, -0.4, 1.2])
        assert score(M.DUAL_SUM, QueryParts(c, c, c), c) == pytest.approx(2.0, abs=1e-12)

    @pytest.mark.parametrize("method", [M.CAST, M.CAST_PLUS, M.PAP, M.PAP_PLUS])
    def test_zero_perspective_is_error(self, method):
        with pytest.raises(ZeroPerspective):
            score(method, QueryParts([1, 0], [1, 0], [0, 0]), [1, 1])

    def test_parts_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            QueryParts([1, 0], [1, 0], [1, 0, 0])

    def test_method_parse(self):
        assert M.parse("PAP+") is M.PAP_PLUS
        assert M.parse("dual_sum") is M.DUAL_SUM
        with pytest.raises(ValueError):
            M.parse("nope")

    @settings(max_examples=100)
    @given(st.integers(1, 16).flatmap(lambda d: st.tuples(finite_vectors(d), finite_vectors(d), finite_vectors(d))))
    def test_concat_identity(self, vectors):
        r, p, c = vectors
        assume(r @ r + p @ p > 1e-6 and c @ c > 1e-6)
        expected = (r @ c + p @ c) / (np.linalg.norm(np.r_[r, p]) * np.linalg.norm(np.r_[c, c]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ZeroNormWarning)
            assert score(M.CONCAT, QueryParts(r, r, p), c) == pytest.approx(expected, abs=1e-9)

    # scaling p moves the corpus side of add+, concat+ and cast+, so only
    # methods whose corpus side is independent of |p| are covered
    SCALE_SAFE = [m for m in DENSE_METHODS if m not in (M.ADD_PLUS, M.CONCAT_PLUS, M.CAST_PLUS)]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 50))
    def test_ranking_invariant_to_query_scale(self, seed, alpha):
        rng = np.random.default_rng(seed)
        q, r, p = rng.standard_normal((3, 8))
        docs = rng.standard_normal((30, 8))
        parts = QueryParts(q, r, p)
        for method in self.SCALE_SAFE:

            def ranking(pp):
                scores = [score(method, pp, c) for c in docs]
                return sorted(range(len(docs)), key=lambda i: (-round(scores[i], 9), i))

            assert ranking(parts) == ranking(parts.scaled(alpha)), method


def reference_bm25(query, docs, doc_index, k1=0.9, b=0.4):
    """Closed-form Okapi BM25 over raw strings, written independently of the package."""
    tokenized = [d.lower().split() for d in docs]
    n = len(tokenized)
    avgdl = sum(len(t) for t in tokenized) / n
    doc = tokenized[doc_index]
    total = 0.0
    for term in query.lower().split():
        df = sum(1 for t in tokenized if term in t)
        idf = max(0.0, math.log(1 + (n - df + 0.5) / (df + 0.5)))
        tf = doc.count(term)
        total += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(doc) / avgdl))
    return total


TEN_DOCS = [
    "blue fox runs",
    "red fox sleeps in the den",
    "blue blue sky",
    "a quick brown dog",
    "the fox and the hound",
    "ocean is blue and deep",
    "fox fox fox",
    "nothing in common here",
    "deep learning for retrieval",
    "blue whale and blue fox",
]


def bm25(query, docs, i, params=BM25Params()):
    tokens = [tokenize(d) for d in docs]
    return bm25_score(params, tokenize(query), tokens[i], CorpusStats.build(tokens))


class TestBM25:
    @pytest.mark.parametrize("query", ["blue fox", "the fox", "deep blue ocean", "fox fox"])
    def test_reference_ten_docs(self, query):
        for i in range(len(TEN_DOCS)):
            assert bm25(query, TEN_DOCS, i) == pytest.approx(reference_bm25(query, TEN_DOCS, i), abs=1e-9)

    def test_reference_three_docs(self):
        docs = TEN_DOCS[:3]
        for i in range(3):
            assert bm25("blue fox", docs, i) == pytest.approx(reference_bm25("blue fox", docs, i), abs=1e-9)

    def test_no_overlap(self):
        assert bm25("purple elephant", TEN_DOCS, 0) == 0.0

    def test_empty_query(self):
        assert bm25("", TEN_DOCS, 0) == 0.0

    def test_single_doc_corpus_positive(self):
        assert bm25("lonely words", ["lonely words"], 0) > 0.0

    @settings(max_examples=100)
    @given(st.integers(1, 10), st.integers(0, 5))
    def test_monotone_in_tf(self, tf, extra):
        stats = CorpusStats(n_docs=10, df={"fox": 3}, avgdl=5.0)
        params = BM25Params()
        low = bm25_score(params, ["fox"], ["fox"] * tf + ["pad"] * 4, stats)
        high = bm25_score(params, ["fox"], ["fox"] * (tf + extra) + ["pad"] * 4, stats)
        assert high >= low

    def test_param_validation(self):
        with pytest.raises(ValueError):
            BM25Params(k1=-1)
        with pytest.raises(ValueError):
            BM25Params(b=1.5)


class TestTokenize:
    @pytest.mark.parametrize(
        "text,tokens",
        [
            ("Find a news article", ["find", "a", "news", "article"]),
            ("", []),
            ("U.S.-based", ["u", "s", "based"]),
            ("Ünïcode Straße 42", ["ünïcode", "straße", "42"]),
        ],
    )
    def test_examples(self, text, tokens):
        assert tokenize(text) == tokens
