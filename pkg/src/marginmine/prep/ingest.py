"""JSON-lines document ingestion."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import List

from ..errors import FormatError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Document:
    doc_id: str
    lang: str
    text: str


@dataclass
class IngestResult:
    documents: List[Document] = field(default_factory=list)
    missing_field: int = 0
    malformed: int = 0

    def __iter__(self):
        return iter(self.documents)

    def __len__(self) -> int:
        return len(self.documents)


def ingest_jsonl(path, text_field: str = "text", lang: str = "und", strict: bool = False) -> IngestResult:
    """Read one document per JSON line.

    Lines without a string ``text_field`` are skipped and counted. Malformed
    JSON is counted and skipped unless ``strict``, in which case it raises
    :class:`FormatError` naming the line. Tabs in the body become spaces; line
    breaks are kept because they separate paragraphs.
    """
    result = IngestResult()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                if strict:
                    raise FormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
                result.malformed += 1
                continue
            text = obj.get(text_field) if isinstance(obj, dict) else None
            if not isinstance(text, str):
                result.missing_field += 1
                continue
            doc_id = obj.get("id", obj.get("doc_id", lineno))
            result.documents.append(Document(str(doc_id), lang, text.replace("\t", " ")))
    if result.missing_field or result.malformed:
        log.info("%s: skipped %d lines without %r, %d malformed",
                 path, result.missing_field, text_field, result.malformed)
    return result
