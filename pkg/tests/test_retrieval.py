import time
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pir.data import CorpusDoc
from pir.embedding import EmbeddingStore
from pir.errors import CacheMismatch, MissingEmbedding, ZeroPerspective
from pir.retrieval import (
    RetrievalResult,
    batch_retrieve,
    build_index,
    build_projected_cache,
    top_k,
)
from pir.scoring import BM25Params, CorpusStats, QueryParts, ScoringMethod, bm25_score, score, tokenize

M = ScoringMethod
WORDS = "alpha beta gamma delta epsilon zeta eta theta".split()


def random_instance(seed, n_docs=None, dim=None):
    """Random corpus with duplicated rows so ties actually occur."""
    rng = np.random.default_rng(seed)
    n_docs = n_docs or int(rng.integers(1, 200))
    dim = dim or int(rng.integers(1, 33))
    matrix = rng.standard_normal((n_docs, dim)).astype(np.float32)
    for i in range(0, n_docs, 7):
        matrix[i] = matrix[0]
    order = rng.permutation(n_docs)  # shuffled input order
    docs = [CorpusDoc(f"d{i:03d}", " ".join(rng.choice(WORDS, size=int(rng.integers(1, 8))))) for i in order]
    store = EmbeddingStore(dim, [f"d{i:03d}" for i in order], matrix[order])
    q, r, p = rng.standard_normal((3, dim))
    tokens = tuple(tokenize(" ".join(rng.choice(WORDS, size=3))))
    parts = QueryParts(q, r, p, query_id="q", perspective_text="the view", tokens=tokens)
    return docs, store, parts


def reference_ranking(docs, store, method, parts):
    """Score every doc one at a time, then fully sort by (-score, doc_id)."""
    if method.is_lexical:
        tokens = [tokenize(d.text) for d in sorted(docs, key=lambda d: d.doc_id)]
        stats = CorpusStats.build(tokens)
        scored = [
            (d.doc_id, bm25_score(BM25Params(), parts.tokens, tokenize(d.text), stats)) for d in docs
        ]
    else:
        scored = [(d.doc_id, score(method, parts, store[d.doc_id])) for d in docs]
    return sorted(scored, key=lambda item: (-item[1], item[0]))


class TestBuildIndex:
    def test_rows_in_doc_id_order(self):
        store = EmbeddingStore(2, ["b", "c", "a"], np.array([[1, 0], [0, 1], [1, 1]], dtype=np.float32))
        docs = [CorpusDoc(i, "x") for i in ("c", "a", "b")]
        index = build_index(docs, store)
        assert index.doc_ids == ("a", "b", "c")
        assert index.matrix.shape == (3, 2)
        assert index.matrix[0].tolist() == [1, 1]

    def test_missing_embedding(self):
        store = EmbeddingStore(2, ["a"], np.ones((1, 2), dtype=np.float32))
        with pytest.raises(MissingEmbedding):
            build_index([CorpusDoc("a", "x"), CorpusDoc("b", "y")], store)

    def test_avgdl(self):
        docs = [CorpusDoc("a", "one two"), CorpusDoc("b", "a b c d"), CorpusDoc("c", "1 2 3 4 5 6")]
        assert build_index(docs, None).lexical_stats.avgdl == 4.0

    def test_immutable(self):
        docs, store, _ = random_instance(0, 5, 3)
        with pytest.raises(ValueError):
            build_index(docs, store).matrix[0, 0] = 1.0


class TestTopK:
    def test_clamp(self):
        docs, store, parts = random_instance(1, 5, 4)
        result = top_k(build_index(docs, store), M.BASELINE, parts, 50)
        assert len(result.ranked) == 5

    def test_contamination_fixture(self, contamination):
        f = contamination
        store = EmbeddingStore(4, ["c1", "c2"], np.array([f["c1"], f["c2"]], dtype=np.float32))
        index = build_index([CorpusDoc("c1", "gold"), CorpusDoc("c2", "distractor")], store)
        parts = QueryParts(f["q"], f["r"], f["p"])
        assert top_k(index, M.BASELINE, parts, 1).doc_ids == ["c2"]
        assert top_k(index, M.PAP, parts, 1).doc_ids == ["c1"]

    def test_ties_by_doc_id(self):
        store = EmbeddingStore(2, ["z", "m", "a"], np.ones((3, 2), dtype=np.float32))
        index = build_index([CorpusDoc(i, "x") for i in ("z", "m", "a")], store)
        result = top_k(index, M.BASELINE, QueryParts([1, 0], [1, 0], [0, 1]), 3)
        assert result.doc_ids == ["a", "m", "z"]

    def test_lexical(self):
        docs = [CorpusDoc("a", "blue fox"), CorpusDoc("b", "red dog"), CorpusDoc("c", "blue blue sky")]
        result = top_k(build_index(docs, None), M.BM25, ["fox"], 3)
        assert result.doc_ids[0] == "a"
        assert [s for _, s in result.ranked][1:] == [0.0, 0.0]

    def test_bad_k(self):
        docs, store, parts = random_instance(2, 3, 2)
        with pytest.raises(ValueError):
            top_k(build_index(docs, store), M.BASELINE, parts, 0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 250))
    def test_oracle_all_methods(self, seed, k):
        docs, store, parts = random_instance(seed)
        index = build_index(docs, store)
        for method in ScoringMethod:
            expected = reference_ranking(docs, store, method, parts)[:k]
            assert list(top_k(index, method, parts, k).ranked) == expected, method

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 50), st.integers(1, 50))
    def test_prefix_truncation(self, seed, k1, k2):
        docs, store, parts = random_instance(seed)
        index = build_index(docs, store)
        small, large = sorted((k1, k2))
        for method in (M.BASELINE, M.PAP_PLUS, M.BM25):
            a = top_k(index, method, parts, small).ranked
            b = top_k(index, method, parts, large).ranked
            assert b[: len(a)] == a


class TestProjectedCache:
    def test_orthogonal_rows_unchanged(self):
        store = EmbeddingStore(3, ["a", "b"], np.array([[1, 0, 0], [0, 1, 0]], dtype=np.float32))
        index = build_index([CorpusDoc("a", "x"), CorpusDoc("b", "y")], store)
        cache = build_projected_cache(index, [0, 0, 2], "up")
        assert np.array_equal(cache.matrix, index.matrix)

    def test_parallel_row_zero(self):
        store = EmbeddingStore(2, ["a"], np.array([[2, 4]], dtype=np.float32))
        cache = build_projected_cache(build_index([CorpusDoc("a", "x")], store), [1, 2], "p")
        assert np.allclose(cache.matrix, 0.0)

    def test_rows_orthogonal(self):
        rng = np.random.default_rng(5)
        store = EmbeddingStore(16, [f"d{i}" for i in range(100)], rng.standard_normal((100, 16)).astype(np.float32))
        index = build_index([CorpusDoc(f"d{i}", "x") for i in range(100)], store)
        p = rng.standard_normal(16)
        cache = build_projected_cache(index, p, "p")
        bound = 1e-6 * np.linalg.norm(index.matrix, axis=1) * np.linalg.norm(p)
        assert (np.abs(cache.matrix @ p) <= bound).all()

    def test_zero_perspective(self):
        docs, store, _ = random_instance(6, 4, 3)
        with pytest.raises(ZeroPerspective):
            build_projected_cache(build_index(docs, store), [0, 0, 0], "nothing")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_cache_transparent(self, seed):
        docs, store, parts = random_instance(seed)
        index = build_index(docs, store)
        cache = build_projected_cache(index, parts.p, parts.perspective_text)
        assert top_k(index, M.PAP_PLUS, parts, 20, cache) == top_k(index, M.PAP_PLUS, parts, 20)

    def test_mismatched_text(self):
        docs, store, parts = random_instance(7, 5, 3)
        index = build_index(docs, store)
        cache = build_projected_cache(index, parts.p, "another view")
        with pytest.raises(CacheMismatch):
            top_k(index, M.PAP_PLUS, parts, 3, cache)

    def test_mismatched_vector(self):
        docs, store, parts = random_instance(8, 5, 3)
        index = build_index(docs, store)
        cache = build_projected_cache(index, parts.p * 2, parts.perspective_text)
        with pytest.raises(CacheMismatch):
            top_k(index, M.PAP_PLUS, parts, 3, cache)


def many_queries(seed, n, dim):
    rng = np.random.default_rng(seed)
    return [
        QueryParts(*rng.standard_normal((3, dim)), query_id=f"q{i}", perspective_text=f"view {i % 5}")
        for i in range(n)
    ]


class TestBatch:
    def test_singleton(self):
        docs, store, parts = random_instance(9, 30, 8)
        index = build_index(docs, store)
        assert batch_retrieve(index, M.PAP, [parts], 5) == [top_k(index, M.PAP, parts, 5)]

    def test_order_independence(self):
        docs, store, _ = random_instance(10, 40, 8)
        index = build_index(docs, store)
        a, b = many_queries(1, 2, 8)
        forward = batch_retrieve(index, M.TRI_SUM, [a, b], 5)
        backward = batch_retrieve(index, M.TRI_SUM, [b, a], 5)
        assert forward == backward[::-1]

    def test_threads_identical(self):
        docs, store, _ = random_instance(11, 150, 16)
        index = build_index(docs, store)
        queries = many_queries(2, 60, 16)
        for method in (M.BASELINE, M.CONCAT_PLUS, M.PAP_PLUS):
            serial = batch_retrieve(index, method, queries, 10, threads=1)
            assert batch_retrieve(index, method, queries, 10, threads=4) == serial
            assert serial == [top_k(index, method, q, 10) for q in queries]

    def test_errors_collected(self):
        docs, store, _ = random_instance(12, 10, 4)
        index = build_index(docs, store)
        good = many_queries(3, 1, 4)[0]
        bad = QueryParts(good.q, good.r, np.zeros(4), query_id="bad")
        results = batch_retrieve(index, M.PAP, [good, bad], 3)
        assert results[0].error is None and len(results[0].ranked) == 3
        assert isinstance(results[1].error, ZeroPerspective)
        assert results[1].ranked == ()
        assert isinstance(results[1], RetrievalResult)

    def test_budget(self):
        docs, store, _ = random_instance(13, 2000, 64)
        index = build_index(docs, store)
        queries = many_queries(4, 500, 64)
        start = time.perf_counter()
        for method in (M.BASELINE, M.PAP):
            batch_retrieve(index, method, queries, 10)
        assert time.perf_counter() - start < 10.0
