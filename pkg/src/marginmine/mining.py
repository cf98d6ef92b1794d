"""Margin scoring and the bidirectional "max" mining strategy.

For a pair ``(x, y)`` the margin is

    cos(x, y) / ( sum_{z in NN_k(x)} cos(x, z) / 2k  +  sum_{z in NN_k(y)} cos(y, z) / 2k )

where ``NN_k(x)`` are the ``k`` nearest neighbours of ``x`` in the other
language. Each sentence of either side proposes the neighbour with the highest
margin; the two candidate sets are unioned, sorted, filtered greedily so every
sentence is used at most once, and thresholded.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, NamedTuple, Sequence

import numpy as np

from .ann.exact import SearchResult, search_exact
from .ann.ivfpq import IvfPqIndex, build_index, search_ivfpq
from .embeddings import EmbeddingMatrix, SentenceTable, as_matrix, normalize_l2
from .errors import ConsistencyError, FormatError, LengthError, ParameterError, ShapeError

DEFAULT_K = 4
DEFAULT_THRESHOLD = 1.04
DEFAULT_RETAIN_FLOOR = 1.02
DENOM_EPS = 1e-9
UNDEFINED_MARGIN = math.nan

FORWARD = "forward"
BACKWARD = "backward"
BACKENDS = ("exact", "ivfpq")


@dataclass(frozen=True)
class MiningConfig:
    k: int = DEFAULT_K
    threshold: float = DEFAULT_THRESHOLD
    retain_floor: float | None = None  # None -> min(1.02, threshold)
    emit_secondary: bool = False
    backend: str = "exact"
    nlist: int | None = None
    m: int | None = None
    nprobe: int | None = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if self.retain_floor is None:
            object.__setattr__(self, "retain_floor", min(DEFAULT_RETAIN_FLOOR, self.threshold))
        if self.retain_floor > self.threshold:
            raise ParameterError(
                f"retain_floor {self.retain_floor} is above threshold {self.threshold}"
            )
        if self.backend not in BACKENDS:
            raise ParameterError(f"unknown backend {self.backend!r}; choose from {BACKENDS}")


class CandidatePair(NamedTuple):
    src_id: int
    tgt_id: int
    margin: float
    direction: str


class MinedPair(NamedTuple):
    margin: float
    src_id: int
    tgt_id: int


@dataclass(frozen=True)
class MinedBitext:
    """Greedy 1:1 pairs, sorted by (margin desc, src asc, tgt asc).

    ``pairs`` holds everything at or above ``threshold``; ``secondary`` holds
    pairs in ``[retain_floor, threshold)`` when requested.
    """

    pairs: tuple
    threshold: float
    secondary: tuple = ()
    candidates: tuple = field(default=(), repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def pair_set(self) -> set:
        return {(p.src_id, p.tgt_id) for p in self.pairs}


def is_undefined(margin: float) -> bool:
    return math.isnan(margin)


def _neighbourhood_term(sims: Sequence[float]) -> float:
    return sum(sims) / (2 * len(sims))


def margin_score(cos_xy: float, nn_x_sims: Sequence[float], nn_y_sims: Sequence[float]) -> float:
    """Ratio of ``cos_xy`` to the mean neighbourhood similarity of both sides.

    Returns :data:`UNDEFINED_MARGIN` (NaN) when the denominator is within
    1e-9 of zero; callers treat that as a rejected pair.
    """
    if len(nn_x_sims) != len(nn_y_sims):
        raise ShapeError(f"neighbour lists differ in length: {len(nn_x_sims)} vs {len(nn_y_sims)}")
    if not len(nn_x_sims):
        raise ShapeError("neighbour lists are empty")
    denom = _neighbourhood_term(nn_x_sims) + _neighbourhood_term(nn_y_sims)
    if abs(denom) < DENOM_EPS:
        return UNDEFINED_MARGIN
    return cos_xy / denom


def neighbourhood_terms(table: SearchResult) -> np.ndarray:
    """Per-query ``sum(sims) / 2k_eff``; NaN for queries without neighbours."""
    valid = np.arange(table.sims.shape[1])[None, :] < table.lengths[:, None]
    sums = np.where(valid, table.sims, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / (2.0 * table.lengths)


def _best_per_query(table: SearchResult, own_terms, other_terms, direction, swap) -> List[CandidatePair]:
    n, width = table.ids.shape
    if n == 0 or width == 0:
        return []
    valid = np.arange(width)[None, :] < table.lengths[:, None]
    safe_ids = np.where(valid, table.ids, 0)
    denom = own_terms[:, None] + other_terms[safe_ids]
    with np.errstate(invalid="ignore", divide="ignore"):
        margins = table.sims / denom
    usable = valid & (np.abs(denom) >= DENOM_EPS) & np.isfinite(margins)
    key = np.where(usable, margins, -np.inf)
    order = np.lexsort((np.where(usable, table.ids, np.iinfo(np.int64).max), -key), axis=-1)
    best = order[:, 0]
    rows = np.arange(n)
    out = []
    for q in np.flatnonzero(usable[rows, best]):
        col = best[q]
        other = int(table.ids[q, col])
        src, tgt = (other, int(q)) if swap else (int(q), other)
        out.append(CandidatePair(src, tgt, float(margins[q, col]), direction))
    return out


def _unit(matrix) -> EmbeddingMatrix:
    matrix = as_matrix(matrix)
    if matrix.normalized or matrix.count == 0:
        return matrix
    return normalize_l2(matrix)


def neighbour_tables(
    l1: EmbeddingMatrix,
    l2: EmbeddingMatrix,
    config: MiningConfig,
    l1_index: IvfPqIndex | None = None,
    l2_index: IvfPqIndex | None = None,
):
    """k-NN of every L1 sentence in L2 (forward) and every L2 sentence in L1 (backward)."""
    if l1.dim != l2.dim:
        raise ShapeError(f"L1 dim {l1.dim} != L2 dim {l2.dim}")
    k, threads = config.k, config.threads
    if config.backend == "exact" or l1.count == 0 or l2.count == 0:
        fwd = search_exact(l2, l1, k, threads=threads) if l2.count else _empty_table(l1.count)
        bwd = search_exact(l1, l2, k, threads=threads) if l1.count else _empty_table(l2.count)
        return fwd, bwd
    if l2_index is None:
        l2_index = build_index(l2, config.nlist and min(config.nlist, l2.count), config.m,
                               seed=config.seed, threads=threads)
    if l1_index is None:
        l1_index = build_index(l1, config.nlist and min(config.nlist, l1.count), config.m,
                               seed=config.seed, threads=threads)
    fwd = search_ivfpq(l2_index, l1, k, nprobe=_nprobe(config, l2_index), threads=threads)
    bwd = search_ivfpq(l1_index, l2, k, nprobe=_nprobe(config, l1_index), threads=threads)
    return fwd, bwd


def _nprobe(config: MiningConfig, index: IvfPqIndex) -> int | None:
    return None if config.nprobe is None else min(config.nprobe, index.nlist)


def _empty_table(n: int) -> SearchResult:
    return SearchResult(ids=np.zeros((n, 0), dtype=np.int64), sims=np.zeros((n, 0)),
                        lengths=np.zeros(n, dtype=np.int64))


def directional_candidates(fwd: SearchResult, bwd: SearchResult):
    """Per-query best-margin candidates in both directions."""
    term_x = neighbourhood_terms(fwd)
    term_y = neighbourhood_terms(bwd)
    forward = _best_per_query(fwd, term_x, term_y, FORWARD, swap=False)
    backward = _best_per_query(bwd, term_y, term_x, BACKWARD, swap=True)
    return forward, backward


def score_direction(queries, targets, k: int = DEFAULT_K, backend: str = "exact", threads: int = 1):
    """Candidates proposed by each query sentence among its ``k`` target neighbours.

    Both neighbour tables are computed: the margin of ``(x, y)`` needs the
    neighbourhood of ``y`` in the query language as well.
    """
    queries, targets = _unit(queries), _unit(targets)
    if targets.count == 0 or queries.count == 0:
        return []
    config = MiningConfig(k=k, backend=backend, threads=threads)
    fwd, bwd = neighbour_tables(queries, targets, config)
    return directional_candidates(fwd, bwd)[0]


def union_candidates(forward: Iterable[CandidatePair], backward: Iterable[CandidatePair]) -> List[CandidatePair]:
    """Merge both directions; a pair proposed twice keeps its larger margin."""
    merged = {}
    for cand in list(forward) + list(backward):
        key = (cand.src_id, cand.tgt_id)
        prev = merged.get(key)
        if prev is None or cand.margin > prev.margin:
            merged[key] = cand
    return sort_candidates(merged.values())


def sort_candidates(candidates: Iterable[CandidatePair]) -> List[CandidatePair]:
    return sorted(candidates, key=lambda c: (-c.margin, c.src_id, c.tgt_id))


def greedy_filter(candidates: Sequence[CandidatePair], floor: float = -math.inf) -> List[MinedPair]:
    """Scan candidates best-first, keeping a pair only if both sentences are unused.

    Scanning stops at the first margin below ``floor``.
    """
    used_src, used_tgt = set(), set()
    out = []
    for cand in sort_candidates(candidates):
        if cand.margin < floor:
            break
        if cand.src_id in used_src or cand.tgt_id in used_tgt:
            continue
        used_src.add(cand.src_id)
        used_tgt.add(cand.tgt_id)
        out.append(MinedPair(cand.margin, cand.src_id, cand.tgt_id))
    return out


def select(candidates: Sequence[CandidatePair], threshold: float = DEFAULT_THRESHOLD,
           retain_floor: float | None = None) -> MinedBitext:
    """Greedy filter then split by threshold (and optional secondary floor)."""
    floor = threshold if retain_floor is None else min(retain_floor, threshold)
    kept = greedy_filter(candidates, floor)
    primary = tuple(p for p in kept if p.margin >= threshold)
    secondary = tuple(p for p in kept if p.margin < threshold) if retain_floor is not None else ()
    return MinedBitext(pairs=primary, threshold=threshold, secondary=secondary,
                       candidates=tuple(candidates))


def score_candidates(l1, l2, config: MiningConfig | None = None,
                     l1_index: IvfPqIndex | None = None, l2_index: IvfPqIndex | None = None):
    """Union of forward and backward candidates, sorted best-first, before any threshold."""
    config = config or MiningConfig()
    l1, l2 = _unit(l1), _unit(l2)
    if l1.dim != l2.dim:
        raise ShapeError(f"L1 dim {l1.dim} != L2 dim {l2.dim}")
    if l1.count == 0 or l2.count == 0:
        return []
    fwd, bwd = neighbour_tables(l1, l2, config, l1_index, l2_index)
    forward, backward = directional_candidates(fwd, bwd)
    return union_candidates(forward, backward)


def mine(l1, l2, config: MiningConfig | None = None,
         l1_index: IvfPqIndex | None = None, l2_index: IvfPqIndex | None = None) -> MinedBitext:
    """Mine 1:1 sentence pairs between two embedded corpora.

    Rows that are not flagged normalized are L2-normalized first. With the
    ivfpq backend, indexes are built from ``config`` unless supplied.
    """
    config = config or MiningConfig()
    candidates = score_candidates(l1, l2, config, l1_index, l2_index)
    return select(candidates, config.threshold,
                  config.retain_floor if config.emit_secondary else None)


# -- output -------------------------------------------------------------------


def format_row(margin: float, src_text: str, tgt_text: str) -> str:
    return f"{margin:.6f}\t{src_text}\t{tgt_text}"


def attach_texts(bitext, l1_texts: SentenceTable, l2_texts: SentenceTable, pairs=None) -> List[str]:
    """TSV rows ``margin<TAB>L1 text<TAB>L2 text`` for each mined pair."""
    rows = []
    for p in bitext.pairs if pairs is None else pairs:
        if not (0 <= p.src_id < len(l1_texts)):
            raise ConsistencyError(f"source id {p.src_id} outside sentence table of {len(l1_texts)}")
        if not (0 <= p.tgt_id < len(l2_texts)):
            raise ConsistencyError(f"target id {p.tgt_id} outside sentence table of {len(l2_texts)}")
        rows.append(format_row(p.margin, l1_texts[p.src_id], l2_texts[p.tgt_id]))
    return rows


def write_rows(rows: Sequence[str], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(row)
            fh.write("\n")


def write_pair_ids(pairs: Sequence[MinedPair], path) -> None:
    """Id sidecar: ``margin<TAB>src_id<TAB>tgt_id`` with round-trippable margins."""
    write_rows([f"{p.margin!r}\t{p.src_id}\t{p.tgt_id}" for p in pairs], path)


def read_pair_ids(path) -> List[MinedPair]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            try:
                margin, src, tgt = float(parts[0]), int(parts[1]), int(parts[2])
            except (ValueError, IndexError):
                raise FormatError(f"{path}:{lineno}: expected margin, src_id, tgt_id") from None
            out.append(MinedPair(margin, src, tgt))
    return out


# -- candidate files ----------------------------------------------------------

CAND_MAGIC = b"MCAND001"
_CAND_HEADER = struct.Struct("<8sQ")
_CAND_DTYPE = np.dtype([("margin", "<f8"), ("src", "<u8"), ("tgt", "<u8"), ("dir", "u1")])
_DIR_CODES = {FORWARD: 0, BACKWARD: 1}
_DIR_NAMES = {v: k for k, v in _DIR_CODES.items()}


def write_candidates(candidates: Sequence[CandidatePair], path) -> None:
    """Binary candidate list: magic, uint64 count, then (f64, u64, u64, u8) records."""
    rec = np.zeros(len(candidates), dtype=_CAND_DTYPE)
    for i, c in enumerate(candidates):
        rec[i] = (c.margin, c.src_id, c.tgt_id, _DIR_CODES[c.direction])
    with open(path, "wb") as fh:
        fh.write(_CAND_HEADER.pack(CAND_MAGIC, len(candidates)))
        fh.write(rec.tobytes())


def read_candidates(path) -> List[CandidatePair]:
    buf = Path(path).read_bytes()
    if len(buf) < _CAND_HEADER.size:
        raise FormatError(f"{path}: file too short for header")
    magic, count = _CAND_HEADER.unpack_from(buf)
    if magic != CAND_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    body = buf[_CAND_HEADER.size:]
    if len(body) != count * _CAND_DTYPE.itemsize:
        raise LengthError(f"{path}: payload has {len(body)} bytes, header requires {count * _CAND_DTYPE.itemsize}")
    rec = np.frombuffer(body, dtype=_CAND_DTYPE)
    if rec.size and rec["dir"].max() > 1:
        raise FormatError(f"{path}: unknown direction code")
    return [CandidatePair(int(r["src"]), int(r["tgt"]), float(r["margin"]), _DIR_NAMES[int(r["dir"])])
            for r in rec]
