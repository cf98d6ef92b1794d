"""Rule-based sentence segmentation.

Line breaks always end a sentence. Inside a line, a run of terminators ends a
sentence when it is followed by whitespace (or the end of the line) and the
next word does not start in lower case, unless the word before a period is a
known abbreviation, a single-letter initial, a dotted acronym, or (for
languages with ordinal dates) a day number before a month name. Scripts that
do not put spaces after terminators are handled by a regex fallback that
breaks immediately after full-width terminators.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, List

from ..errors import ConfigError

LATIN_TERMINATORS = ".!?…"
CJK_TERMINATORS = "。！？"
DEFAULT_TERMINATORS = LATIN_TERMINATORS + CJK_TERMINATORS

_CLOSERS = "\"'”’»)]}」』）"
_OPENERS = "\"'“‘«([{"
_ACRONYM = re.compile(r"^(?:\w\.)+\w$")
_LINE_SPLIT = re.compile(r"\r\n|\r|\n")

UNSUPPORTED = {"th": "Thai has no sentence terminators and no reliable segmenter is available"}


@dataclass(frozen=True)
class SegmenterRules:
    lang: str
    abbreviations: frozenset = field(default_factory=frozenset)
    terminators: str = DEFAULT_TERMINATORS
    regex_fallback: bool = False
    ordinal_months: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        abbrevs = frozenset(self.abbreviations)
        for a in abbrevs:
            if not a or a != a.lower():
                raise ConfigError(f"abbreviation {a!r} must be non-empty and lower case")
        object.__setattr__(self, "abbreviations", abbrevs)
        object.__setattr__(self, "ordinal_months", frozenset(m.lower() for m in self.ordinal_months))
        wide = "".join(c for c in self.terminators if c in CJK_TERMINATORS)
        narrow = "".join(c for c in self.terminators if c not in CJK_TERMINATORS)
        if self.regex_fallback and wide:
            immediate = f"[{re.escape(wide)}]+[{re.escape(_CLOSERS)}]*"
            spaced = f"[{re.escape(narrow)}]+[{re.escape(_CLOSERS)}]*(?=\\s|$)" if narrow else None
        else:
            immediate = None
            spaced = f"[{re.escape(self.terminators)}]+[{re.escape(_CLOSERS)}]*(?=\\s|$)"
        parts = [p for p in (immediate and f"(?P<wide>{immediate})", spaced and f"(?P<narrow>{spaced})") if p]
        object.__setattr__(self, "_pattern", re.compile("|".join(parts)))


_EN_ABBR = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc", "e.g", "i.e",
    "inc", "ltd", "co", "corp", "no", "fig", "vol", "pp", "approx", "dept", "est",
    "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
    "u.s", "u.k", "a.m", "p.m", "ca", "cf", "al", "gen", "gov", "rev", "lt", "col", "sgt",
}
_DE_ABBR = {
    "z.b", "bzw", "ca", "dr", "prof", "hr", "fr", "usw", "vgl", "evtl", "ggf", "inkl",
    "nr", "str", "u.a", "d.h", "s", "bspw", "jh", "jhd", "mio", "mrd", "abs", "bzgl", "etc",
}
_FR_ABBR = {"m", "mm", "mme", "mlle", "dr", "st", "ste", "etc", "p.ex", "cf", "env", "av", "bd", "vol", "no"}
_ES_ABBR = {"sr", "sra", "srta", "dr", "dra", "ud", "uds", "etc", "p.ej", "pág", "núm", "av", "vol", "ej"}
_IT_ABBR = {"sig", "sigg", "sig.ra", "dott", "prof", "ecc", "pag", "ca", "es", "avv", "ing", "vol"}
_PT_ABBR = {"sr", "sra", "dr", "dra", "prof", "etc", "pág", "av", "ex", "vol", "n.º"}
_NL_ABBR = {"dhr", "mevr", "dr", "prof", "bijv", "enz", "o.a", "d.w.z", "m.b.t", "ca", "nr", "blz"}
_DE_MONTHS = {
    "januar", "februar", "märz", "april", "mai", "juni", "juli", "august",
    "september", "oktober", "november", "dezember",
}

RULES = {
    "en": SegmenterRules("en", frozenset(_EN_ABBR)),
    "de": SegmenterRules("de", frozenset(_DE_ABBR), ordinal_months=frozenset(_DE_MONTHS)),
    "fr": SegmenterRules("fr", frozenset(_FR_ABBR)),
    "es": SegmenterRules("es", frozenset(_ES_ABBR)),
    "it": SegmenterRules("it", frozenset(_IT_ABBR)),
    "pt": SegmenterRules("pt", frozenset(_PT_ABBR)),
    "nl": SegmenterRules("nl", frozenset(_NL_ABBR)),
    "zh": SegmenterRules("zh", regex_fallback=True),
    "ja": SegmenterRules("ja", regex_fallback=True),
    "ko": SegmenterRules("ko", frozenset(_EN_ABBR), regex_fallback=True),
}


def check_language(lang: str) -> None:
    if lang in UNSUPPORTED:
        raise ConfigError(f"language {lang!r} is not supported: {UNSUPPORTED[lang]}")


def get_rules(lang: str) -> SegmenterRules:
    """Rule table for ``lang``; unknown languages get English rules plus the regex fallback."""
    check_language(lang)
    if lang in RULES:
        return RULES[lang]
    return SegmenterRules(lang, RULES["en"].abbreviations, regex_fallback=True)


def _word_before(text: str, pos: int) -> str:
    start = pos
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    return text[start:pos].lstrip(_OPENERS)


def _word_after(text: str, pos: int) -> str:
    m = re.match(r"\s*(\S*)", text[pos:])
    return m.group(1).lstrip(_OPENERS) if m else ""


def _is_boundary(line: str, match: re.Match, rules: SegmenterRules) -> bool:
    if match.lastgroup == "wide":
        return True
    nxt = _word_after(line, match.end())
    if not nxt:
        return True
    if nxt[0].islower():
        return False
    run = match.group(0).rstrip(_CLOSERS)
    if run != ".":
        return True
    word = _word_before(line, match.start())
    low = word.lower()
    if low in rules.abbreviations:
        return False
    if len(word) == 1 and word.isalpha():
        return False
    if _ACRONYM.match(word):
        return False
    if rules.ordinal_months and word.isdigit() and len(word) <= 2:
        if nxt.lower().rstrip(".,;:") in rules.ordinal_months:
            return False
    return True


def _segment_line(line: str, rules: SegmenterRules) -> Iterable[str]:
    start = 0
    for match in rules._pattern.finditer(line):
        if _is_boundary(line, match, rules):
            piece = line[start:match.end()].strip()
            if piece:
                yield piece
            start = match.end()
    tail = line[start:].strip()
    if tail:
        yield tail


def segment(text: str, rules: SegmenterRules | str = "en") -> List[str]:
    """Split ``text`` into trimmed, non-empty sentences.

    No non-whitespace character is dropped or added: joining the output
    reproduces the input with whitespace removed at sentence edges only.
    """
    if isinstance(rules, str):
        rules = get_rules(rules)
    out = []
    for line in _LINE_SPLIT.split(text):
        out.extend(_segment_line(line, rules))
    return out
