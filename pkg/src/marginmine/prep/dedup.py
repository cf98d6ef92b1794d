"""Order-preserving exact deduplication."""

from __future__ import annotations

import unicodedata
from typing import Iterable, List


def dedup_key(sentence: str) -> str:
    return unicodedata.normalize("NFC", sentence).strip()


def dedup(sentences: Iterable[str]) -> List[str]:
    """Keep the first occurrence of each sentence, compared after NFC + trim.

    Returned sentences are in their normalized, trimmed form; sentences that
    trim to nothing are dropped. Case is preserved.
    """
    seen = set()
    out = []
    for s in sentences:
        key = dedup_key(s)
        if not key or key in seen:
            continue
        seen.add(key)
        out.append(key)
    return out
