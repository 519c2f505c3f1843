"""Seeded synthetic benchmark where the query perspective contaminates ranking.

Each root owns four orthonormal directions ``r1, r2, n1, n2``. Gold doc
``i`` is ``ri + ni``; the query for perspective ``i`` is ``ri + gamma*nj``
(``j != i``) and its perspective vector is ``nj``. Plain cosine then
prefers the sibling's gold doc, while removing ``nj`` from the query
leaves exactly ``ri``.

With ``rotation="random"`` each root's frame is a random rotation,
redrawn until every foreign doc stays strictly below the gold doc's cosine
against ``ri`` (by ``margin``), so the PAP outcome holds for the whole
corpus and not only within a root.
"""

from __future__ import annotations

import math

import numpy as np

from ..data import CorpusDoc, PerspectiveQuery, TaskBundle, build_bundle
from ..embedding import BundleStores, EmbeddingStore
from ..errors import DimTooSmall

MAX_ATTEMPTS = 2000


def _random_frame(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, 4)))
    return (q * np.sign(np.diag(r))).T  # rows: r1, r2, n1, n2


def _identity_frame(dim: int, root: int) -> np.ndarray:
    frame = np.zeros((4, dim))
    frame[np.arange(4), 4 * root + np.arange(4)] = 1.0
    return frame


def _frames(seed, n_roots, dim, rotation, margin):
    if rotation == "identity":
        if dim < 4 * n_roots:
            raise DimTooSmall(f"identity rotation needs dim >= 4*n_roots = {4 * n_roots}, got {dim}")
        return [_identity_frame(dim, a) for a in range(n_roots)]
    if rotation != "random":
        raise ValueError(f"rotation must be 'random' or 'identity', got {rotation!r}")

    rng = np.random.default_rng(seed)
    bound = 1.0 - margin
    frames = []
    roots = np.zeros((0, dim))
    docs = np.zeros((0, dim))
    for a in range(n_roots):
        for _ in range(MAX_ATTEMPTS):
            f = _random_frame(rng, dim)
            new_roots = f[:2]
            new_docs = f[:2] + f[2:]
            if not len(docs) or (
                (new_roots @ docs.T).max() < bound and (roots @ new_docs.T).max() < bound
            ):
                break
        else:
            raise DimTooSmall(
                f"could not place root {a} of {n_roots} in dim {dim} after {MAX_ATTEMPTS} draws; "
                "use a larger dim or fewer roots"
            )
        frames.append(f)
        roots = np.vstack([roots, new_roots])
        docs = np.vstack([docs, new_docs])
    return frames


def generate_synthetic_benchmark(
    seed: int,
    n_roots: int,
    dim: int,
    contamination: float = 3.0,
    rotation: str = "random",
    margin: float = 0.05,
    task_name: str = "synthetic",
) -> tuple[TaskBundle, BundleStores]:
    """Build a two-perspective-per-root bundle and its four vector stores."""
    if dim < 4:
        raise DimTooSmall(f"dim must be >= 4, got {dim}")
    if n_roots < 1:
        raise ValueError("n_roots must be >= 1")
    if not contamination > 1:
        raise ValueError("contamination must exceed 1")

    frames = _frames(seed, n_roots, dim, rotation, margin)
    queries, corpus, qrels = [], [], {}
    qvecs, rvecs, pvecs, dvecs = [], [], [], []
    for a, (r1, r2, n1, n2) in enumerate(frames):
        root_id = f"r{a:05d}"
        root_text = f"synthetic root {a}"
        rvecs.append((root_id, (r1 + r2) / math.sqrt(2.0)))
        directions = ((r1, n1), (r2, n2))
        for i in range(2):
            j = 1 - i
            r_i, n_i = directions[i]
            n_j = directions[j][1]
            qid = f"q{a:05d}_{i}"
            did = f"d{a:05d}_{i}"
            ptext = f"perspective {a}.{j}"
            queries.append(
                PerspectiveQuery(
                    query_id=qid,
                    root_id=root_id,
                    root_text=root_text,
                    perspective_text=ptext,
                    query_text=f"{root_text} seen through {ptext}",
                    task=task_name,
                )
            )
            corpus.append(CorpusDoc(did, f"synthetic document {a}.{i}", {"facet": str(i)}))
            qrels[qid] = {did}
            qvecs.append((qid, r_i + contamination * n_j))
            pvecs.append((qid, n_j))
            dvecs.append((did, r_i + n_i))

    bundle = build_bundle(task_name, queries, corpus, qrels, benchmark=True)
    provenance = {"provider_id": f"synthetic:seed={seed}", "model_id": f"synthetic-{rotation}"}
    stores = BundleStores(
        EmbeddingStore.from_items(qvecs, dim, **provenance),
        EmbeddingStore.from_items(rvecs, dim, **provenance),
        EmbeddingStore.from_items(pvecs, dim, **provenance),
        EmbeddingStore.from_items(dvecs, dim, **provenance),
    )
    return bundle, stores
