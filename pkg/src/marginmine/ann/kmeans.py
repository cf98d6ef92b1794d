"""Seeded Lloyd k-means with k-means++ initialisation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..embeddings import EmbeddingMatrix
from ..errors import CapacityError, ParameterError
from ..parallel import map_chunks

log = logging.getLogger(__name__)

REL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class KMeansModel:
    k: int
    dim: int
    centroids: np.ndarray  # (k, dim) float32
    iterations_run: int = 0
    inertia: float = float("nan")
    trace: tuple = field(default=(), repr=False)

    def assign(self, data, threads: int = 1):
        """Nearest-centroid labels and squared distances for each row."""
        return assign(_as_array(data), self.centroids.astype(np.float64), threads)


def _as_array(data) -> np.ndarray:
    if isinstance(data, EmbeddingMatrix):
        data = data.values
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise ParameterError(f"expected a 2-D array, got shape {x.shape}")
    return x


def assign(x: np.ndarray, centroids: np.ndarray, threads: int = 1):
    c_sq = np.einsum("ij,ij->i", centroids, centroids)

    def work(lo, hi):
        xc = x[lo:hi]
        d2 = np.einsum("ij,ij->i", xc, xc)[:, None] - 2.0 * (xc @ centroids.T) + c_sq[None, :]
        np.maximum(d2, 0.0, out=d2)
        lab = np.argmin(d2, axis=1)
        return lab, d2[np.arange(hi - lo), lab]

    parts = map_chunks(work, x.shape[0], threads)
    if not parts:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return (
        np.concatenate([p[0] for p in parts]).astype(np.int64),
        np.concatenate([p[1] for p in parts]),
    )


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # every point coincides with a chosen centroid
            idx = int(rng.integers(n))
        else:
            cum = np.cumsum(d2)
            idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            idx = min(idx, int(np.flatnonzero(d2 > 0)[-1]))
        chosen.append(idx)
        np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1), out=d2)
    return x[chosen].copy()


def _update(x, labels, d2, k):
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels, minlength=k)
    centroids = np.zeros((k, x.shape[1]))
    nonempty = np.flatnonzero(counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])[nonempty]
    sums = np.add.reduceat(x[order], starts, axis=0)
    centroids[nonempty] = sums / counts[nonempty, None]
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        # farthest points first, lowest index on ties
        far = np.lexsort((np.arange(x.shape[0]), -d2))[: empty.size]
        centroids[empty] = x[far]
    return centroids, empty.size


def train_kmeans(
    data,
    k: int,
    max_iters: int = 25,
    seed: int = 0,
    threads: int = 1,
    verbose: bool = False,
) -> KMeansModel:
    """Cluster ``data`` into ``k`` cells.

    Stops after ``max_iters`` Lloyd updates or once the relative inertia
    improvement drops below 1e-6. Centroids are rounded to float32 after each
    update so the returned inertia is exact for the stored centroids.
    """
    x = _as_array(data)
    n, dim = x.shape
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if n < k:
        raise CapacityError(f"cannot form {k} clusters from {n} points")
    if max_iters < 0:
        raise ParameterError("max_iters must be >= 0")

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(x, k, rng).astype(np.float32).astype(np.float64)
    labels, d2 = assign(x, centroids, threads)
    inertia = float(d2.sum())
    trace = [inertia]
    iters = 0
    while iters < max_iters and inertia > 0.0:
        centroids, n_empty = _update(x, labels, d2, k)
        centroids = centroids.astype(np.float32).astype(np.float64)
        iters += 1
        labels, d2 = assign(x, centroids, threads)
        new_inertia = float(d2.sum())
        trace.append(new_inertia)
        if verbose:
            log.info("kmeans iter %d inertia %.6g empty %d", iters, new_inertia, n_empty)
        improvement = inertia - new_inertia
        inertia = new_inertia
        if improvement <= REL_TOL * trace[-2]:
            break
    return KMeansModel(
        k=k,
        dim=dim,
        centroids=centroids.astype(np.float32),
        iterations_run=iters,
        inertia=inertia,
        trace=tuple(trace),
    )
