"""Exact and IVF-PQ nearest-neighbour search."""

from .exact import SearchResult, exact_backend, search_exact, topk_rows
from .ivfpq import (
    IvfPqIndex,
    build_index,
    default_m,
    default_nlist,
    default_nprobe,
    ivfpq_backend,
    load_index,
    search_ivfpq,
    serialized_layout,
    write_index,
)
from .kmeans import KMeansModel, train_kmeans
from .pq import KSUB, ProductQuantizer, encode, train_pq

__all__ = [
    "KSUB",
    "IvfPqIndex",
    "KMeansModel",
    "ProductQuantizer",
    "SearchResult",
    "build_index",
    "default_m",
    "default_nlist",
    "default_nprobe",
    "encode",
    "exact_backend",
    "ivfpq_backend",
    "load_index",
    "search_exact",
    "search_ivfpq",
    "serialized_layout",
    "topk_rows",
    "train_kmeans",
    "train_pq",
    "write_index",
]
