"""Corpus preparation: ingest, segment, deduplicate, filter by language."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence

from .dedup import dedup, dedup_key
from .ingest import Document, IngestResult, ingest_jsonl
from .lid import Dropped, FilterResult, LidModel, char_ngrams, lid_filter, read_labels, train_lid
from .segment import RULES, SegmenterRules, check_language, get_rules, segment


@dataclass
class PreparedCorpus:
    sentences: List[str]
    dropped: List[Dropped]
    segmented: int
    deduplicated: int


def prepare(documents: Iterable[Document], lang: str, model: LidModel | None = None,
            labels: Sequence[str] | None = None) -> PreparedCorpus:
    """Segment every document, deduplicate, then drop out-of-language sentences.

    Without a model or labels the language filter is skipped.
    """
    rules = get_rules(lang)
    sentences = [s for doc in documents for s in segment(doc.text, rules)]
    unique = dedup(sentences)
    if model is None and labels is None:
        return PreparedCorpus(unique, [], len(sentences), len(unique))
    result = lid_filter(unique, lang, model=model, labels=labels)
    return PreparedCorpus(result.kept, result.dropped, len(sentences), len(unique))


__all__ = [
    "Document",
    "Dropped",
    "FilterResult",
    "IngestResult",
    "LidModel",
    "PreparedCorpus",
    "RULES",
    "SegmenterRules",
    "char_ngrams",
    "check_language",
    "dedup",
    "dedup_key",
    "get_rules",
    "ingest_jsonl",
    "lid_filter",
    "prepare",
    "read_labels",
    "segment",
    "train_lid",
]
