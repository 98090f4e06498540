"""Filing text measures: lexicon word rates, Gunning-Fog, sentence polarity
and the FinBERT label aggregate.

Tokens are lower-cased alphabetic runs (an inner apostrophe is kept, digits and
punctuation are dropped).  Sentences end at ``.``, ``?`` or ``!`` followed by
whitespace and an upper-case letter, unless the word before the period is a
known abbreviation.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import DataError
from .parallel import pmap

log = logging.getLogger(__name__)

CATEGORIES = ("positive", "negative", "uncertainty", "litigious")
LABELS = ("positive", "negative", "neutral")
TEXT_FEATURES = ("positive_words", "negative_words", "uncertainty_words", "litigious_words",
                 "gunning_fog", "vader_sentiment", "finbert_sentiment")

NEGATION_WINDOW = 3
SQUASH_ALPHA = 15.0
DEFAULT_ABBREVIATIONS = frozenset({
    "inc", "corp", "co", "ltd", "llc", "mr", "mrs", "ms", "dr", "no", "st", "jr", "sr",
    "vs", "etc", "e.g", "i.e", "u.s", "jan", "feb", "mar", "apr", "jun", "jul", "aug",
    "sep", "sept", "oct", "nov", "dec",
})

_TOKEN = re.compile(r"[a-z]+(?:'[a-z]+)?")
_BOUNDARY = re.compile(r"[.?!]+(?=\s+[A-Z])")
_PREV_WORD = re.compile(r"([A-Za-z][A-Za-z.]*)\.*$")
_VOWELS = re.compile(r"[aeiouy]+")


@dataclass(frozen=True)
class Document:
    firm_id: str
    year: int
    sentences: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.sentences:
            raise DataError(f"document {self.firm_id}/{self.year} has no sentences")

    @property
    def total_words(self) -> int:
        return sum(len(s) for s in self.sentences)

    @classmethod
    def from_text(cls, firm_id, year, text, abbreviations=DEFAULT_ABBREVIATIONS) -> "Document":
        sents = tuple(s for s in (tuple(tokenize(p)) for p in split_sentences(text, abbreviations))
                      if s)
        return cls(firm_id, int(year), sents)


@dataclass
class Lexicon:
    categories: dict[str, frozenset[str]]
    valence: dict[str, float] = field(default_factory=dict)
    negators: frozenset[str] = frozenset()
    boosters: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for c in CATEGORIES:
            self.categories.setdefault(c, frozenset())
        bad = [w for w, v in self.valence.items() if not -1.0 <= v <= 1.0]
        if bad:
            raise DataError(f"valences outside [-1, 1]: {sorted(bad)[:5]}")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower().replace("’", "'"))


def split_sentences(text: str, abbreviations=DEFAULT_ABBREVIATIONS) -> list[str]:
    out, start = [], 0
    for m in _BOUNDARY.finditer(text):
        prev = _PREV_WORD.search(text[start:m.start() + 1])
        if m.group().startswith(".") and prev and prev.group(1).lower().rstrip(".") in abbreviations:
            continue
        out.append(text[start:m.end()])
        start = m.end()
    out.append(text[start:])
    return [s.strip() for s in out if s.strip()]


def syllables(word: str) -> int:
    """Vowel-group count, minus a silent final ``e`` (not ``-le``), at least 1."""
    n = len(_VOWELS.findall(word))
    if n > 1 and word.endswith("e") and not word.endswith("le"):
        n -= 1
    return max(n, 1)


def lexicon_counts(doc: Document, lex: Lexicon) -> dict[str, float]:
    """Category hits per 1,000 words."""
    total = doc.total_words
    if total <= 0:
        raise DataError("document has no words")
    out = {}
    for c in CATEGORIES:
        words = lex.categories[c]
        if not words:
            log.warning("lexicon category %r is empty; score set to 0", c)
        hits = sum(1 for s in doc.sentences for w in s if w in words)
        out[c] = 1000.0 * hits / total
    return out


def gunning_fog(doc: Document) -> float:
    words = doc.total_words
    if words == 0:
        raise DataError("document has no words")
    complex_words = sum(1 for s in doc.sentences for w in s if syllables(w) >= 3)
    return 0.4 * (words / len(doc.sentences) + 100.0 * complex_words / words)


def sentence_polarity(tokens: Sequence[str], lex: Lexicon, alpha: float = SQUASH_ALPHA) -> float:
    """Summed valence, squashed by ``x / sqrt(x^2 + alpha)``.

    A negator flips the valence of words among the next three tokens; a
    booster multiplies the valence of the word right after it.
    """
    x = 0.0
    scope = 0
    boost = 1.0
    for tok in tokens:
        if tok in lex.negators:
            scope = NEGATION_WINDOW
            boost = 1.0
            continue
        v = lex.valence.get(tok)
        if v is not None:
            s = v * boost
            x += -s if scope > 0 else s
            boost = 1.0
        elif tok in lex.boosters:
            boost *= lex.boosters[tok]
        else:
            boost = 1.0
        scope = max(scope - 1, 0)
    return x / math.sqrt(x * x + alpha)


def mean_sentence_polarity(doc: Document, lex: Lexicon) -> float:
    return sum(sentence_polarity(s, lex) for s in doc.sentences) / len(doc.sentences)


def finbert_aggregate(labels: Sequence[str], doc: Document | None = None) -> float:
    """(positive sentences - negative sentences) / all sentences."""
    if not labels:
        raise DataError("no sentence labels")
    if doc is not None and len(labels) != len(doc.sentences):
        raise DataError(f"{doc.firm_id}/{doc.year}: {len(labels)} labels for "
                        f"{len(doc.sentences)} sentences")
    bad = set(labels) - set(LABELS)
    if bad:
        raise DataError(f"unknown sentence labels {sorted(bad)}")
    pos = sum(1 for lab in labels if lab == "positive")
    neg = sum(1 for lab in labels if lab == "negative")
    return (pos - neg) / len(labels)


def text_measures(doc: Document, lex: Lexicon, labels: Sequence[str] | None) -> dict[str, float]:
    counts = lexicon_counts(doc, lex)
    return {
        "positive_words": counts["positive"],
        "negative_words": counts["negative"],
        "uncertainty_words": counts["uncertainty"],
        "litigious_words": counts["litigious"],
        "gunning_fog": gunning_fog(doc),
        "vader_sentiment": mean_sentence_polarity(doc, lex),
        "finbert_sentiment": float("nan") if labels is None else finbert_aggregate(labels, doc),
    }


def compute_text_table(docs: Mapping[tuple[str, int], Document], lex: Lexicon,
                       labels: Mapping[tuple[str, int], Sequence[str]] | None = None
                       ) -> dict[tuple[str, int], dict[str, float]]:
    keys = sorted(docs)
    labels = labels or {}
    vals = pmap(lambda k: text_measures(docs[k], lex, labels.get(k)), keys)
    return dict(zip(keys, vals))


# ---------------------------------------------------------------------------
# files


def load_documents(root: str, abbreviations=DEFAULT_ABBREVIATIONS) -> dict[tuple[str, int], Document]:
    """Plain-text filings laid out as ``<root>/<firm>/<year>.txt``."""
    if not os.path.isdir(root):
        raise DataError(f"document directory not found: {root}")
    out = {}
    for firm in sorted(os.listdir(root)):
        fdir = os.path.join(root, firm)
        if not os.path.isdir(fdir):
            continue
        for name in sorted(os.listdir(fdir)):
            stem, ext = os.path.splitext(name)
            if ext != ".txt" or not stem.isdigit():
                continue
            with open(os.path.join(fdir, name), encoding="utf-8") as fh:
                out[(firm, int(stem))] = Document.from_text(firm, int(stem), fh.read(),
                                                            abbreviations)
    return out


def load_sentence_labels(path: str) -> dict[tuple[str, int], list[str]]:
    """Rows ``firm_id, year, sentence_index, label``; indices must run 0..n-1."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    grouped: dict[tuple[str, int], dict[int, str]] = {}
    for i, r in enumerate(rows):
        try:
            key = (r["firm_id"], int(r["year"]))
            grouped.setdefault(key, {})[int(r["sentence_index"])] = r["label"]
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: row {i + 1}: {exc}") from None
    out = {}
    for key, d in grouped.items():
        if sorted(d) != list(range(len(d))):
            raise DataError(f"{path}: sentence indices for {key} are not 0..{len(d) - 1}")
        out[key] = [d[i] for i in range(len(d))]
    return out


def _pairs(path: str) -> Iterable[tuple[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise DataError(f"{path}: line {i + 1}: expected two columns")
            if i == 0 and row[0] == "word":
                continue
            yield row[0].strip().lower(), row[1].strip()


def load_lexicon(categories_path: str, valence_path: str | None = None,
                 boosters_path: str | None = None) -> Lexicon:
    """Word lists as ``word, category`` (category may also be ``negator``);
    valences and boosters as ``word, number``."""
    cats: dict[str, set[str]] = {c: set() for c in CATEGORIES}
    negators = set()
    for word, cat in _pairs(categories_path):
        if cat == "negator":
            negators.add(word)
        elif cat in cats:
            cats[cat].add(word)
        else:
            raise DataError(f"{categories_path}: unknown category {cat!r}")
    valence = {w: float(v) for w, v in _pairs(valence_path)} if valence_path else {}
    boosters = {w: float(v) for w, v in _pairs(boosters_path)} if boosters_path else {}
    return Lexicon({c: frozenset(s) for c, s in cats.items()}, valence, frozenset(negators),
                   boosters)


def builtin_lexicon() -> Lexicon:
    """Tiny illustrative lexicon for tests and the synthetic pipeline."""
    return Lexicon(
        {
            "positive": frozenset({"gain", "improve", "strong", "profitable", "growth", "good"}),
            "negative": frozenset({"loss", "decline", "weak", "impairment", "default", "bad"}),
            "uncertainty": frozenset({"may", "uncertain", "approximately", "risk", "could"}),
            "litigious": frozenset({"court", "lawsuit", "plaintiff", "litigation", "claims"}),
        },
        valence={"good": 0.6, "strong": 0.5, "gain": 0.4, "growth": 0.4, "profitable": 0.5,
                 "bad": -0.6, "weak": -0.5, "loss": -0.5, "decline": -0.4, "default": -0.7},
        negators=frozenset({"not", "no", "never", "without"}),
        boosters={"very": 1.5, "extremely": 2.0, "slightly": 0.5},
    )
