"""Inverted-file index with product-quantised residuals (IVF-PQ).

Vectors are assigned to their nearest coarse centroid; the residual
``x - centroid`` is optionally rotated and then PQ-encoded. Search scans the
``nprobe`` nearest cells and scores candidates by asymmetric distance
computation, then reports cosine ``1 - d^2 / 2`` (valid for unit vectors).

Serialized layout (little-endian)::

    b"IVFPQ001"
    uint32 dim, uint32 nlist, uint32 m, uint32 ksub, uint64 count
    float32 centroids[nlist][dim]
    float32 codebooks[m][ksub][dim / m]
    per list: uint64 length, uint64 ids[length], uint8 codes[length][m]
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..embeddings import EmbeddingMatrix, as_matrix
from ..errors import CapacityError, DataError, FormatError, LengthError, ParameterError, ShapeError
from ..parallel import map_chunks
from .exact import SearchResult, _check_k
from .kmeans import KMeansModel, train_kmeans
from .pq import ProductQuantizer, train_pq

MAGIC = b"IVFPQ001"
_HEADER = struct.Struct("<8sIIIIQ")
_U64 = struct.Struct("<Q")
_QUERY_CHUNK = 256


def default_nlist(count: int) -> int:
    return max(1, min(math.ceil(4 * math.sqrt(count)), count))


def default_nprobe(nlist: int) -> int:
    return max(1, nlist // 4)


def default_m(dim: int) -> int:
    """Largest divisor of ``dim`` not above 64 that keeps subvectors >= 4 wide."""
    cap = min(64, dim // 4)
    for m in range(cap, 0, -1):
        if dim % m == 0:
            return m
    return 1


@dataclass(frozen=True, eq=False)
class IvfPqIndex:
    coarse: KMeansModel
    pq: ProductQuantizer
    list_ids: tuple  # nlist arrays of uint64, ascending
    list_codes: tuple  # nlist arrays of (len, m) uint8
    rotation: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.coarse.dim

    @property
    def nlist(self) -> int:
        return self.coarse.k

    @property
    def m(self) -> int:
        return self.pq.m

    @property
    def count(self) -> int:
        return int(sum(len(ids) for ids in self.list_ids))

    def list_sizes(self) -> list:
        return [len(ids) for ids in self.list_ids]

    def rotate(self, x: np.ndarray) -> np.ndarray:
        return x if self.rotation is None else x @ self.rotation

    def save(self, path) -> None:
        write_index(self, path)


def _require_unit(matrix: EmbeddingMatrix, what: str) -> None:
    if matrix.normalized or matrix.count == 0:
        return
    norms = np.sqrt(np.einsum("ij,ij->i", matrix.values, matrix.values, dtype=np.float64))
    off = np.flatnonzero(np.abs(norms - 1.0) > 1e-4)
    if off.size:
        raise DataError(f"{what} row {int(off[0])} is not unit-norm; normalize first")


def build_index(
    data,
    nlist: int | None = None,
    m: int | None = None,
    seed: int = 0,
    max_iters: int = 25,
    threads: int = 1,
    rotation: np.ndarray | None = None,
) -> IvfPqIndex:
    """Train the coarse quantizer and residual PQ on ``data`` and index every row.

    ``rotation`` is an optional orthogonal ``dim x dim`` matrix applied to the
    residuals before product quantization (an OPQ hook); identity by default.
    """
    data = as_matrix(data)
    _require_unit(data, "data")
    nlist = default_nlist(data.count) if nlist is None else nlist
    m = default_m(data.dim) if m is None else m
    if nlist < 1:
        raise ParameterError(f"nlist must be >= 1, got {nlist}")
    if data.count < nlist:
        raise CapacityError(f"cannot build {nlist} cells from {data.count} vectors")
    if m < 1 or data.dim % m:
        raise ShapeError(f"dim {data.dim} is not divisible by m={m}")
    if rotation is not None:
        rotation = np.asarray(rotation, dtype=np.float64)
        if rotation.shape != (data.dim, data.dim):
            raise ShapeError(f"rotation must be {data.dim}x{data.dim}")
        if not np.allclose(rotation @ rotation.T, np.eye(data.dim), atol=1e-6):
            raise ParameterError("rotation must be orthogonal")

    x = data.values.astype(np.float64)
    coarse = train_kmeans(x, nlist, max_iters=max_iters, seed=seed, threads=threads)
    labels, _ = coarse.assign(x, threads)
    residuals = x - coarse.centroids.astype(np.float64)[labels]
    if rotation is not None:
        residuals = residuals @ rotation
    pq = train_pq(residuals, m, seed=seed + 1, max_iters=max_iters, threads=threads)
    codes = pq.encode_batch(residuals, threads)

    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(nlist + 1))
    list_ids = tuple(order[bounds[c]:bounds[c + 1]].astype(np.uint64) for c in range(nlist))
    list_codes = tuple(codes[order[bounds[c]:bounds[c + 1]]] for c in range(nlist))
    return IvfPqIndex(coarse=coarse, pq=pq, list_ids=list_ids, list_codes=list_codes, rotation=rotation)


def _probe_order(q: np.ndarray, centroids: np.ndarray, nprobe: int) -> np.ndarray:
    d2 = ((centroids - q) ** 2).sum(axis=1)
    return np.lexsort((np.arange(len(d2)), d2))[:nprobe]


def search_ivfpq(index: IvfPqIndex, queries, k: int, nprobe: int | None = None, threads: int = 1) -> SearchResult:
    """Approximate top-``k`` cosine neighbours.

    Fewer than ``k`` results are returned for a query when the probed cells
    hold fewer than ``k`` vectors; ``lengths`` records how many are valid.
    """
    queries = as_matrix(queries)
    _check_k(k)
    if nprobe is None:
        nprobe = default_nprobe(index.nlist)
    if not 1 <= nprobe <= index.nlist:
        raise ParameterError(f"nprobe must be in [1, {index.nlist}], got {nprobe}")
    if queries.dim != index.dim:
        raise ShapeError(f"query dim {queries.dim} != index dim {index.dim}")
    _require_unit(queries, "query")

    q_all = queries.values.astype(np.float64)
    centroids = index.coarse.centroids.astype(np.float64)
    arange_m = np.arange(index.m)

    def work(lo, hi):
        ids_out = np.full((hi - lo, k), -1, dtype=np.int64)
        sims_out = np.full((hi - lo, k), -np.inf)
        lens = np.zeros(hi - lo, dtype=np.int64)
        for i in range(lo, hi):
            q = q_all[i]
            cand_ids, cand_d2 = [], []
            for c in _probe_order(q, centroids, nprobe):
                if not len(index.list_ids[c]):
                    continue
                table = index.pq.lookup_tables(index.rotate(q - centroids[c]))
                cand_d2.append(table[arange_m, index.list_codes[c]].sum(axis=1))
                cand_ids.append(index.list_ids[c])
            if not cand_ids:
                continue
            ids = np.concatenate(cand_ids).astype(np.int64)
            sims = 1.0 - np.concatenate(cand_d2) / 2.0
            order = np.lexsort((ids, -sims))[:k]
            n = len(order)
            ids_out[i - lo, :n] = ids[order]
            sims_out[i - lo, :n] = sims[order]
            lens[i - lo] = n
        return ids_out, sims_out, lens

    parts = map_chunks(work, queries.count, threads, chunk=_QUERY_CHUNK)
    if not parts:
        return SearchResult(
            ids=np.zeros((0, k), dtype=np.int64), sims=np.zeros((0, k)), lengths=np.zeros(0, dtype=np.int64)
        )
    return SearchResult(
        ids=np.concatenate([p[0] for p in parts]),
        sims=np.concatenate([p[1] for p in parts]),
        lengths=np.concatenate([p[2] for p in parts]),
    )


def ivfpq_backend(index: IvfPqIndex, nprobe: int | None = None, threads: int = 1):
    """Search callable bound to a prebuilt index; the database argument is ignored."""

    def search(db, queries, k):
        return search_ivfpq(index, queries, k, nprobe=nprobe, threads=threads)

    return search


# -- serialization ------------------------------------------------------------


def write_index(index: IvfPqIndex, path) -> None:
    if index.rotation is not None:
        raise ParameterError("indexes with a non-identity rotation cannot be serialized")
    pq = index.pq
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, index.dim, index.nlist, pq.m, pq.ksub, index.count))
        fh.write(np.ascontiguousarray(index.coarse.centroids, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(pq.codebooks, dtype="<f4").tobytes())
        for ids, codes in zip(index.list_ids, index.list_codes):
            fh.write(_U64.pack(len(ids)))
            fh.write(np.ascontiguousarray(ids, dtype="<u8").tobytes())
            fh.write(np.ascontiguousarray(codes, dtype=np.uint8).tobytes())


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise LengthError(f"{self.path}: truncated at byte {self.pos}, needed {n} more")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out


def _parse(path):
    buf = Path(path).read_bytes()
    r = _Reader(buf, path)
    magic, dim, nlist, m, ksub, count = _HEADER.unpack(r.take(_HEADER.size))
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if dim == 0 or nlist == 0 or m == 0 or ksub == 0 or ksub > 256 or dim % m:
        raise FormatError(f"{path}: invalid header dim={dim} nlist={nlist} m={m} ksub={ksub}")
    sections = {"header": _HEADER.size}
    centroids = np.frombuffer(r.take(4 * nlist * dim), dtype="<f4").reshape(nlist, dim)
    sections["centroids"] = 4 * nlist * dim
    books = np.frombuffer(r.take(4 * m * ksub * (dim // m)), dtype="<f4").reshape(m, ksub, dim // m)
    sections["codebooks"] = books.nbytes
    list_ids, list_codes = [], []
    sections.update(list_lengths=0, ids=0, codes=0)
    for _ in range(nlist):
        (length,) = _U64.unpack(r.take(8))
        ids = np.frombuffer(r.take(8 * length), dtype="<u8")
        codes = np.frombuffer(r.take(length * m), dtype=np.uint8).reshape(length, m)
        list_ids.append(ids.astype(np.uint64))
        list_codes.append(codes.copy())
        sections["list_lengths"] += 8
        sections["ids"] += 8 * length
        sections["codes"] += length * m
    if r.pos != len(buf):
        raise LengthError(f"{path}: {len(buf) - r.pos} trailing bytes")
    if sum(len(i) for i in list_ids) != count:
        raise FormatError(f"{path}: lists hold {sum(len(i) for i in list_ids)} ids, header says {count}")
    all_ids = np.sort(np.concatenate(list_ids)) if list_ids else np.zeros(0, dtype=np.uint64)
    if not np.array_equal(all_ids, np.arange(count, dtype=np.uint64)):
        raise FormatError(f"{path}: stored ids are not a permutation of 0..{count - 1}")
    header = dict(dim=dim, nlist=nlist, m=m, ksub=ksub, count=count)
    return header, centroids, books, list_ids, list_codes, sections


def load_index(path) -> IvfPqIndex:
    header, centroids, books, list_ids, list_codes, _ = _parse(path)
    coarse = KMeansModel(k=header["nlist"], dim=header["dim"], centroids=centroids.astype(np.float32))
    pq = ProductQuantizer(m=header["m"], ksub=header["ksub"], dim=header["dim"], codebooks=books.astype(np.float32))
    return IvfPqIndex(coarse=coarse, pq=pq, list_ids=tuple(list_ids), list_codes=tuple(list_codes))


def serialized_layout(path) -> dict:
    """Byte counts of each section of a serialized index, measured from the file."""
    header, *_, sections = _parse(path)
    sections["total"] = Path(path).stat().st_size
    sections.update({f"n_{k}": v for k, v in header.items()})
    return sections
