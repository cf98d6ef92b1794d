"""Precision/recall against gold alignments and threshold sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Sequence

from .errors import ConsistencyError, FormatError, ParameterError
from .mining import CandidatePair, greedy_filter


class Scores(NamedTuple):
    precision: float
    recall: float
    f1: float


class SweepRow(NamedTuple):
    threshold: float
    count: int
    precision: float | None
    recall: float | None
    f1: float | None


@dataclass(frozen=True)
class SweepReport:
    rows: tuple

    def counts(self) -> List[int]:
        return [r.count for r in self.rows]

    def to_tsv(self) -> str:
        lines = ["threshold\tcount\tprecision\trecall\tf1"]
        for r in self.rows:
            metrics = [_fmt(v) for v in (r.precision, r.recall, r.f1)]
            lines.append("\t".join([f"{r.threshold:.4f}", str(r.count), *metrics]))
        return "\n".join(lines) + "\n"


def _fmt(value: float | None) -> str:
    return "NA" if value is None else f"{value:.4f}"


def _pairs(mined) -> set:
    if hasattr(mined, "pair_set"):
        return mined.pair_set()
    out = set()
    for p in mined:
        if hasattr(p, "src_id"):
            out.add((int(p.src_id), int(p.tgt_id)))
        else:
            src, tgt = p
            out.add((int(src), int(tgt)))
    return out


def _check_ids(pairs: set, src_count, tgt_count, what: str) -> None:
    for src, tgt in pairs:
        if src < 0 or tgt < 0 or (src_count is not None and src >= src_count) or (
            tgt_count is not None and tgt >= tgt_count
        ):
            raise ConsistencyError(f"{what} pair ({src}, {tgt}) references an id outside the corpora")


def precision_recall(mined, gold, src_count: int | None = None, tgt_count: int | None = None) -> Scores:
    """Set precision, recall and F1 of mined ``(src, tgt)`` pairs.

    Conventions: an empty mined set has precision 1.0; recall is 1.0 only
    when the gold set is empty too; F1 is 0 when precision + recall is 0.
    """
    mined_set, gold_set = _pairs(mined), _pairs(gold)
    _check_ids(mined_set, src_count, tgt_count, "mined")
    _check_ids(gold_set, src_count, tgt_count, "gold")
    hits = len(mined_set & gold_set)
    precision = hits / len(mined_set) if mined_set else 1.0
    recall = hits / len(gold_set) if gold_set else 1.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return Scores(precision, recall, f1)


def threshold_sweep(candidates: Sequence[CandidatePair], gold=None, thresholds: Sequence[float] = ()) -> SweepReport:
    """Count (and score, given gold) the greedy 1:1 output at each threshold."""
    thresholds = list(thresholds)
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ParameterError("thresholds must be sorted ascending")
    if not thresholds:
        return SweepReport(())
    kept = greedy_filter(candidates, floor=thresholds[0])
    rows = []
    for t in thresholds:
        selected = [p for p in kept if p.margin >= t]
        if gold is None:
            rows.append(SweepRow(t, len(selected), None, None, None))
        else:
            rows.append(SweepRow(t, len(selected), *precision_recall(selected, gold)))
    return SweepReport(tuple(rows))


def parse_range(text: str) -> List[float]:
    """``start:end:step`` inclusive of both ends (within 1e-12)."""
    try:
        start, end, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise ParameterError(f"threshold range {text!r} is not start:end:step") from None
    if step <= 0 or not all(map(math.isfinite, (start, end, step))):
        raise ParameterError(f"threshold range {text!r} needs a positive finite step")
    if end < start - 1e-12:
        raise ParameterError(f"threshold range {text!r} ends before it starts")
    out, i = [], 0
    while start + i * step <= end + 1e-12:
        out.append(round(start + i * step, 12))
        i += 1
    return out


def read_gold(path) -> set:
    """Gold TSV: one ``src_id<TAB>tgt_id`` per line; blank lines ignored."""
    gold = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 2 tab-separated ids, got {len(parts)} fields")
            try:
                src, tgt = int(parts[0]), int(parts[1])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: ids must be integers") from None
            if src < 0 or tgt < 0:
                raise FormatError(f"{path}:{lineno}: ids must be non-negative")
            if (src, tgt) in gold:
                raise FormatError(f"{path}:{lineno}: duplicate pair ({src}, {tgt})")
            gold.add((src, tgt))
    return gold


def write_gold(pairs: Iterable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for src, tgt in sorted(pairs):
            fh.write(f"{src}\t{tgt}\n")
