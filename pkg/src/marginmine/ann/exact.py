"""Brute-force cosine k-NN, the reference every approximate path is checked against."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..embeddings import EmbeddingMatrix, as_matrix
from ..errors import ParameterError, ShapeError
from ..parallel import map_chunks

_QUERY_CHUNK = 512


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Per-query neighbours sorted by (similarity desc, id asc).

    ``ids`` and ``sims`` are ``(nq, k)``; row ``i`` holds ``lengths[i]`` valid
    entries followed by ``-1`` / ``-inf`` padding.
    """

    ids: np.ndarray
    sims: np.ndarray
    lengths: np.ndarray

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def row(self, i: int) -> list:
        n = int(self.lengths[i])
        return [(int(a), float(b)) for a, b in zip(self.ids[i, :n], self.sims[i, :n])]

    def same_as(self, other: "SearchResult") -> bool:
        return (
            np.array_equal(self.ids, other.ids)
            and np.array_equal(self.sims, other.sims)
            and np.array_equal(self.lengths, other.lengths)
        )


def _check_k(k: int) -> None:
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")


def topk_rows(scores: np.ndarray, k: int, ids: np.ndarray | None = None):
    """Top-``k`` of each row of ``scores`` under (score desc, id asc).

    ``ids`` maps columns to external ids (defaults to the column index).
    Returns ``(ids, scores)`` of shape ``(rows, min(k, cols))``.
    """
    rows, cols = scores.shape
    if ids is None:
        ids = np.arange(cols, dtype=np.int64)
    kk = min(k, cols)
    if kk == 0:
        return np.zeros((rows, 0), dtype=np.int64), np.zeros((rows, 0))
    idgrid = np.broadcast_to(ids, scores.shape)
    if kk == cols:
        order = np.lexsort((idgrid, -scores), axis=-1)
        return np.take_along_axis(idgrid, order, 1).copy(), np.take_along_axis(scores, order, 1)

    part = np.argpartition(-scores, kk - 1, axis=1)[:, :kk]
    vals = np.take_along_axis(scores, part, 1)
    pids = ids[part]
    kth = vals.min(axis=1)
    # rows where the k-th value is tied with entries outside the partition
    crowded = np.flatnonzero((scores >= kth[:, None]).sum(axis=1) > kk)
    for r in crowded:
        cand = np.flatnonzero(scores[r] >= kth[r])
        keep = np.lexsort((ids[cand], -scores[r, cand]))[:kk]
        part[r] = cand[keep]
        vals[r] = scores[r, part[r]]
        pids[r] = ids[part[r]]
    order = np.lexsort((pids, -vals), axis=-1)
    return np.take_along_axis(pids, order, 1), np.take_along_axis(vals, order, 1)


def search_exact(data, queries, k: int, threads: int = 1) -> SearchResult:
    """Exact top-``k`` by dot product (cosine for unit rows).

    If the database has fewer than ``k`` rows every row is returned.
    """
    data, queries = as_matrix(data), as_matrix(queries)
    _check_k(k)
    if data.dim != queries.dim:
        raise ShapeError(f"database dim {data.dim} != query dim {queries.dim}")
    db = data.values.astype(np.float64)
    q = queries.values.astype(np.float64)
    kk = min(k, data.count)

    def work(lo, hi):
        return topk_rows(q[lo:hi] @ db.T, kk)

    parts = map_chunks(work, queries.count, threads, chunk=_QUERY_CHUNK)
    if parts:
        ids = np.concatenate([p[0] for p in parts])
        sims = np.concatenate([p[1] for p in parts])
    else:
        ids, sims = np.zeros((0, kk), dtype=np.int64), np.zeros((0, kk))
    return SearchResult(ids=ids, sims=sims, lengths=np.full(queries.count, kk, dtype=np.int64))


def exact_backend(threads: int = 1):
    """Search callable ``(database, queries, k) -> SearchResult`` over raw matrices."""

    def search(db: EmbeddingMatrix, queries: EmbeddingMatrix, k: int) -> SearchResult:
        return search_exact(db, queries, k, threads=threads)

    return search
