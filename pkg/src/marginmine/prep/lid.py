"""Character n-gram naive-Bayes language identification, and external labels.

Each language keeps one smoothed categorical distribution per n-gram order
(1..3). The vocabulary of an order is every n-gram seen in any language plus
one unknown slot, so with additive smoothing ``alpha`` the probabilities of a
table sum to exactly one. With ``alpha == 0`` unseen n-grams would get zero
probability; scoring clamps them to a fixed floor instead of producing -inf.
"""

from __future__ import annotations

import json
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Sequence, Tuple

from ..errors import ConsistencyError, TrainingError

ORDERS = (1, 2, 3)
LOG_FLOOR = math.log(1e-10)
_NON_LETTER = re.compile(r"[\W\d_]+")


def _prepare(text: str) -> str:
    text = unicodedata.normalize("NFC", text).lower()
    return " " + " ".join(_NON_LETTER.sub(" ", text).split()) + " "


def char_ngrams(text: str, n: int) -> List[str]:
    t = _prepare(text)
    return [t[i:i + n] for i in range(len(t) - n + 1)]


@dataclass
class _Table:
    logp: Dict[str, float]
    unk: float  # log-probability of any gram this language never saw
    vocab: int  # size of the shared vocabulary including the unknown slot

    def lookup(self, gram: str) -> float:
        return max(self.logp.get(gram, self.unk), LOG_FLOOR)


@dataclass
class LidModel:
    langs: Tuple[str, ...]
    alpha: float
    tables: Dict[str, Dict[int, _Table]] = field(repr=False)

    def scores(self, sentence: str) -> Dict[str, float]:
        grams = {n: Counter(char_ngrams(sentence, n)) for n in ORDERS}
        out = {}
        for lang in self.langs:
            total = 0.0
            for n, counts in grams.items():
                table = self.tables[lang][n]
                total += sum(c * table.lookup(g) for g, c in counts.items())
            out[lang] = total
        return out

    def classify(self, sentence: str) -> Tuple[str, float]:
        """Most likely language and its posterior under a uniform prior."""
        scores = self.scores(sentence)
        best = min(self.langs, key=lambda lang: (-scores[lang], lang))
        top = scores[best]
        z = sum(math.exp(s - top) for s in scores.values())
        return best, 1.0 / z

    def log_mass(self, lang: str, n: int) -> float:
        """log of the total probability of one table (0 for a normalized table)."""
        t = self.tables[lang][n]
        terms = list(t.logp.values())
        unseen = t.vocab - len(t.logp)
        if unseen and t.unk > -math.inf:
            terms.append(t.unk + math.log(unseen))
        top = max(terms)
        return top + math.log(sum(math.exp(v - top) for v in terms))

    def to_json(self) -> str:
        return json.dumps({
            "langs": list(self.langs),
            "alpha": self.alpha,
            "tables": {
                lang: {str(n): {"logp": t.logp, "unk": t.unk if t.unk > -math.inf else None, "vocab": t.vocab}
                       for n, t in per.items()}
                for lang, per in self.tables.items()
            },
        }, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, data: str) -> "LidModel":
        raw = json.loads(data)
        tables = {
            lang: {int(n): _Table(t["logp"], -math.inf if t["unk"] is None else t["unk"], t["vocab"])
                   for n, t in per.items()}
            for lang, per in raw["tables"].items()
        }
        return cls(tuple(raw["langs"]), raw["alpha"], tables)


def train_lid(labeled: Iterable[Tuple[str, str]], alpha: float = 1.0, langs: Sequence[str] | None = None) -> LidModel:
    """Fit per-language n-gram tables from ``(sentence, lang)`` pairs."""
    if alpha < 0:
        raise TrainingError(f"alpha must be >= 0, got {alpha}")
    counts: Dict[str, Dict[int, Counter]] = {}
    for sentence, lang in labeled:
        per = counts.setdefault(lang, {n: Counter() for n in ORDERS})
        for n in ORDERS:
            per[n].update(char_ngrams(sentence, n))
    if not counts:
        raise TrainingError("no training examples")
    declared = tuple(sorted(langs)) if langs is not None else tuple(sorted(counts))
    missing = [lang for lang in declared if lang not in counts]
    if missing:
        raise TrainingError(f"no training examples for {', '.join(missing)}")

    tables: Dict[str, Dict[int, _Table]] = {lang: {} for lang in declared}
    for n in ORDERS:
        vocab = len(set().union(*(counts[lang][n] for lang in declared))) + 1
        for lang in declared:
            c = counts[lang][n]
            denom = sum(c.values()) + alpha * vocab
            if denom <= 0:
                raise TrainingError(f"{lang}: no {n}-grams and alpha=0")
            logp = {g: math.log((v + alpha) / denom) for g, v in c.items() if v + alpha > 0}
            unk = math.log(alpha / denom) if alpha > 0 else -math.inf
            tables[lang][n] = _Table(logp, unk, vocab)
    return LidModel(declared, alpha, tables)


class Dropped(NamedTuple):
    sentence: str
    predicted: str
    confidence: float


@dataclass
class FilterResult:
    kept: List[str]
    dropped: List[Dropped]
    kept_index: List[int]

    def __iter__(self):
        yield self.kept
        yield self.dropped


def read_labels(path) -> List[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh.read().splitlines()]


def lid_filter(sentences: Sequence[str], expected: str, model: LidModel | None = None,
               labels: Sequence[str] | None = None) -> FilterResult:
    """Keep sentences identified as ``expected``.

    Exactly one of ``model`` (built-in classifier) or ``labels`` (one external
    code per sentence, e.g. fastText output) must be given. A sentence is
    dropped when its predicted language differs from ``expected``; no
    confidence cut-off is applied.
    """
    if (model is None) == (labels is None):
        raise ConsistencyError("pass exactly one of model or labels")
    if labels is not None:
        if len(labels) != len(sentences):
            raise ConsistencyError(f"{len(labels)} labels for {len(sentences)} sentences")
        predictions = [(lab, 1.0) for lab in labels]
    else:
        if expected not in model.langs:
            raise ConsistencyError(f"LID model has no {expected!r} class; it knows {', '.join(model.langs)}")
        predictions = [model.classify(s) for s in sentences]
    result = FilterResult([], [], [])
    for i, (sentence, (pred, conf)) in enumerate(zip(sentences, predictions)):
        if pred == expected:
            result.kept.append(sentence)
            result.kept_index.append(i)
        else:
            result.dropped.append(Dropped(sentence, pred, conf))
    return result
