"""Exact k-nearest-neighbor retrieval in embedding space and mAP@k scoring."""
from __future__ import annotations

import numpy as np


def knn_retrieve(query: np.ndarray, ids: np.ndarray, vectors: np.ndarray,
                 k: int) -> tuple[np.ndarray, np.ndarray]:
    """The k database entries closest to ``query`` in L2, nearest first.

    Ties in distance are broken by ascending id so results are total-ordered.
    Returns (ids, distances).
    """
    ids = np.asarray(ids)
    vectors = np.asarray(vectors, dtype=np.float64)
    if len(vectors) == 0:
        raise ValueError("empty embedding database")
    if len(ids) != len(vectors):
        raise ValueError("need one id per database vector")
    if not 1 <= k <= len(vectors):
        raise ValueError(f"k must lie in [1, {len(vectors)}]")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (vectors.shape[1],):
        raise ValueError("query length does not match the database")
    diff = vectors - query
    d2 = np.einsum("ij,ij->i", diff, diff)
    order = np.lexsort((ids, d2))[:k]
    return ids[order], np.sqrt(d2[order])


def map_at_k(retrieved_labels: np.ndarray, query_labels: np.ndarray,
             k: int) -> float:
    """Mean average precision over queries.

    Per query: precision@i is averaged over the positions i <= k whose
    retrieved label matches the query label (0 when nothing matches), i.e.
    AP is normalized by the number of hits in the top k, which makes a
    lone hit at rank 1 score 1.0.
    """
    if k < 1:
        raise ValueError("k must be positive")
    retrieved = np.asarray(retrieved_labels)
    queries = np.asarray(query_labels)
    if retrieved.ndim != 2 or len(retrieved) != len(queries):
        raise ValueError("need one ranking row per query")
    if retrieved.shape[1] < k:
        raise ValueError("each ranking needs at least k entries")
    hits = retrieved[:, :k] == queries[:, None]
    ranks = np.arange(1, k + 1)
    cum_hits = np.cumsum(hits, axis=1)
    precision = cum_hits / ranks
    n_hits = hits.sum(axis=1)
    ap = np.where(n_hits > 0,
                  (precision * hits).sum(axis=1) / np.maximum(n_hits, 1), 0.0)
    return float(np.mean(ap))
