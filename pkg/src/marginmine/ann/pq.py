"""Product quantizer with one-byte codes per subspace."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..parallel import map_chunks
from .kmeans import _as_array, train_kmeans

log = logging.getLogger(__name__)

KSUB = 256
_ENCODE_CHUNK = 512


@dataclass(frozen=True, eq=False)
class ProductQuantizer:
    m: int
    ksub: int
    dim: int
    codebooks: np.ndarray  # (m, ksub, dsub) float32
    warnings: tuple = ()

    @property
    def dsub(self) -> int:
        return self.dim // self.m

    @property
    def code_size(self) -> int:
        return self.m

    def encode(self, vector) -> np.ndarray:
        v = np.asarray(vector, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != self.dim:
            raise ShapeError(f"vector has shape {v.shape}, quantizer expects ({self.dim},)")
        return self.encode_batch(v[None, :])[0]

    def encode_batch(self, data, threads: int = 1) -> np.ndarray:
        x = _as_array(data)
        if x.shape[1] != self.dim:
            raise ShapeError(f"vectors have dim {x.shape[1]}, quantizer expects {self.dim}")
        books = self.codebooks.astype(np.float64)
        ds = self.dsub

        def work(lo, hi):
            out = np.empty((hi - lo, self.m), dtype=np.uint8)
            for j in range(self.m):
                sub = x[lo:hi, j * ds:(j + 1) * ds]
                d2 = ((sub[:, None, :] - books[j][None, :, :]) ** 2).sum(axis=2)
                out[:, j] = np.argmin(d2, axis=1)
            return out

        parts = map_chunks(work, x.shape[0], threads, chunk=_ENCODE_CHUNK)
        if not parts:
            return np.zeros((0, self.m), dtype=np.uint8)
        return np.concatenate(parts)

    def decode(self, codes) -> np.ndarray:
        c = np.atleast_2d(np.asarray(codes, dtype=np.int64))
        if c.shape[1] != self.m:
            raise ShapeError(f"codes have {c.shape[1]} units, quantizer has m={self.m}")
        parts = [self.codebooks[j][c[:, j]] for j in range(self.m)]
        return np.concatenate(parts, axis=1).astype(np.float32)

    def lookup_tables(self, residual: np.ndarray) -> np.ndarray:
        """Squared distances from each query subvector to every codeword, (m, ksub)."""
        r = np.asarray(residual, dtype=np.float64).reshape(self.m, 1, self.dsub)
        return ((self.codebooks.astype(np.float64) - r) ** 2).sum(axis=2)


def train_pq(data, m: int, seed: int = 0, max_iters: int = 20, threads: int = 1) -> ProductQuantizer:
    """Train ``m`` independent 256-word codebooks, one per contiguous subspace.

    With fewer than 256 training rows the codebook size shrinks to the row
    count and a warning is recorded on the returned quantizer.
    """
    x = _as_array(data)
    n, dim = x.shape
    if m < 1 or dim % m:
        raise ShapeError(f"dim {dim} is not divisible by m={m}")
    ksub = KSUB
    warnings = []
    if n < KSUB:
        ksub = n
        msg = f"only {n} training vectors; codebook size reduced from {KSUB} to {n}"
        warnings.append(msg)
        log.warning(msg)
    if ksub < 1:
        raise ShapeError("cannot train a product quantizer on zero vectors")
    ds = dim // m
    sub_seeds = np.random.SeedSequence(seed).generate_state(m)
    books = np.empty((m, ksub, ds), dtype=np.float32)
    for j in range(m):
        km = train_kmeans(
            x[:, j * ds:(j + 1) * ds], ksub, max_iters=max_iters, seed=int(sub_seeds[j]), threads=threads
        )
        books[j] = km.centroids
    return ProductQuantizer(m=m, ksub=ksub, dim=dim, codebooks=books, warnings=tuple(warnings))


def encode(pq: ProductQuantizer, vector) -> np.ndarray:
    return pq.encode(vector)
