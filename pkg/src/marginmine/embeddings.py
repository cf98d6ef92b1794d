"""Dense sentence-embedding matrices and their text sidecars.

Binary layout of an embedding file (all integers little-endian)::

    bytes 0-7    b"EMBMAT01"
    bytes 8-11   uint32 dim
    bytes 12-19  uint64 count
    then         count * dim float32
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConsistencyError, DataError, FormatError, LengthError, ShapeError

MAGIC = b"EMBMAT01"
_HEADER = struct.Struct("<8sIQ")
_FLOAT = np.dtype("<f4")
_RESERVED = re.compile(r"[\t\r\n]")

ZERO_NORM_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Row-major ``count x dim`` float32 matrix; row ``i`` is sentence ``i``."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float32, order="C", copy=True)
        if values.ndim != 2:
            raise ShapeError(f"embedding matrix must be 2-D, got shape {values.shape}")
        if values.shape[1] < 1:
            raise ShapeError("embedding dim must be positive")
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.argwhere(bad)[0][0])
            raise DataError(f"non-finite value in row {row}")
        if self.normalized and values.size:
            norms = np.sqrt(np.einsum("ij,ij->i", values, values, dtype=np.float64))
            off = np.flatnonzero(np.abs(norms - 1.0) > 1e-4)
            if off.size:
                raise DataError(f"row {int(off[0])} is flagged normalized but has norm {norms[off[0]]:.6f}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    @property
    def count(self) -> int:
        return int(self.values.shape[0])

    def __len__(self) -> int:
        return self.count

    @classmethod
    def empty(cls, dim: int) -> "EmbeddingMatrix":
        return cls(np.zeros((0, dim), dtype=np.float32))

    def take(self, rows: Sequence[int]) -> "EmbeddingMatrix":
        """Sub-matrix with the given rows, renumbered densely from 0."""
        idx = np.asarray(rows, dtype=np.int64)
        return EmbeddingMatrix(self.values[idx], normalized=self.normalized)

    def same_as(self, other: "EmbeddingMatrix") -> bool:
        """Bitwise equality of shape and payload."""
        return (
            self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
        )


def load_embeddings(path) -> EmbeddingMatrix:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"{path}: file too short for header")
        magic, dim, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if dim == 0:
            raise FormatError(f"{path}: header declares dim=0")
        payload = fh.read()
    expected = count * dim * _FLOAT.itemsize
    if len(payload) != expected:
        raise LengthError(
            f"{path}: payload has {len(payload)} bytes, header requires {expected}"
        )
    values = np.frombuffer(payload, dtype=_FLOAT).reshape(count, dim)
    try:
        return EmbeddingMatrix(values.astype(np.float32))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_embeddings(matrix: EmbeddingMatrix, path) -> None:
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, matrix.dim, matrix.count))
            fh.write(matrix.values.astype(_FLOAT, copy=False).tobytes())
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write embeddings: {exc.strerror}", str(path)) from exc


def normalize_l2(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Rescale every row to unit Euclidean norm.

    Norms are computed in float64 so that a positive rescaling of the input
    gives the same result up to float32 rounding.
    """
    x = matrix.values.astype(np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    zero = np.flatnonzero(norms <= ZERO_NORM_EPS)
    if zero.size:
        raise DataError(f"row {int(zero[0])} has zero norm and cannot be normalized")
    return EmbeddingMatrix((x / norms[:, None]).astype(np.float32), normalized=True)


def as_matrix(data) -> EmbeddingMatrix:
    if isinstance(data, EmbeddingMatrix):
        return data
    return EmbeddingMatrix(np.atleast_2d(np.asarray(data, dtype=np.float32)))


# -- sentence sidecar ---------------------------------------------------------


def clean_text(text: str) -> str:
    """Replace tabs and line breaks with single spaces."""
    return _RESERVED.sub(" ", text)


@dataclass(frozen=True)
class SentenceTable:
    """Sentence texts; ``texts[i]`` belongs to embedding row ``i``."""

    texts: tuple

    def __post_init__(self):
        texts = tuple(self.texts)
        for i, t in enumerate(texts):
            if "\t" in t or "\n" in t:
                raise FormatError(f"sentence {i} contains a tab or newline")
        object.__setattr__(self, "texts", texts)

    def __len__(self) -> int:
        return len(self.texts)

    def __getitem__(self, i: int) -> str:
        return self.texts[i]

    def check_matches(self, matrix: EmbeddingMatrix) -> None:
        if len(self) != matrix.count:
            raise ConsistencyError(
                f"{len(self)} sentences but {matrix.count} embedding rows"
            )


def load_sentences(path) -> SentenceTable:
    with open(path, encoding="utf-8", newline="\n") as fh:
        data = fh.read()
    lines = data.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return SentenceTable(tuple(line.rstrip("\r") for line in lines))


def write_sentences(sentences, path) -> None:
    table = sentences if isinstance(sentences, SentenceTable) else SentenceTable(tuple(sentences))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for text in table.texts:
            fh.write(text)
            fh.write("\n")
