"""Lexical alignment metrics between a query and a textualized observation.

Three scores, all symmetric and bounded in [0, 1]:

* TF-IDF cosine over raw-count term frequencies with smoothed IDF,
* Jaccard overlap of token sets,
* normalized Levenshtein similarity over the normalized strings.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .kernels import levenshtein

_TOKEN_RE = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class NormalizedText:
    raw: str
    normalized: str
    tokens: tuple[str, ...]


def normalize(text: str) -> NormalizedText:
    """Lowercase, collapse Unicode whitespace, and split into alphanumeric tokens."""
    normalized = " ".join(text.lower().split())
    return NormalizedText(text, normalized, tuple(_TOKEN_RE.findall(normalized)))


def _as_normalized(x: NormalizedText | str) -> NormalizedText:
    return x if isinstance(x, NormalizedText) else normalize(x)


@dataclass(frozen=True)
class CorpusStats:
    """Document frequencies for IDF weighting."""

    doc_count: int = 0
    doc_frequency: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.doc_count < 0:
            raise ValueError("doc_count must be non-negative")
        for term, df in self.doc_frequency.items():
            if not 1 <= df <= self.doc_count:
                raise ValueError(f"document frequency of {term!r} is {df}, outside [1, {self.doc_count}]")

    @classmethod
    def fit(cls, texts: Iterable[NormalizedText | str]) -> "CorpusStats":
        df: Counter[str] = Counter()
        n = 0
        for text in texts:
            n += 1
            df.update(set(_as_normalized(text).tokens))
        return cls(n, dict(df))

    def idf(self, term: str) -> float:
        return math.log((1 + self.doc_count) / (1 + self.doc_frequency.get(term, 0))) + 1.0


EMPTY_STATS = CorpusStats()


@dataclass(frozen=True)
class AlignmentTriple:
    tfidf: float
    jaccard: float
    nls: float


def jaccard(q: NormalizedText, o: NormalizedText) -> float:
    a, b = set(q.tokens), set(o.tokens)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def nls(q: NormalizedText, o: NormalizedText) -> float:
    """1 - Lev(q, o) / max(|q|, |o|), character level on the normalized strings."""
    a, b = q.normalized, o.normalized
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def weighted_cosine(q_counts: Mapping[str, int], o_counts: Mapping[str, int], stats: CorpusStats) -> float:
    """Cosine between two term-count vectors; TF-only when fewer than two documents are known."""
    if not q_counts or not o_counts:
        return 0.0
    if stats.doc_count < 2:
        def weight(term: str, tf: int) -> float:
            return float(tf)
    else:
        def weight(term: str, tf: int) -> float:
            return tf * stats.idf(term)

    wq = {t: weight(t, c) for t, c in q_counts.items()}
    wo = {t: weight(t, c) for t, c in o_counts.items()}
    # sorted iteration keeps the float sums independent of argument order
    dot = math.fsum(wq[t] * wo[t] for t in sorted(wq.keys() & wo.keys()))
    if dot == 0.0:
        return 0.0
    nq = math.fsum(w * w for w in wq.values())
    no = math.fsum(w * w for w in wo.values())
    return min(1.0, max(0.0, dot / math.sqrt(nq * no)))


def tfidf_cosine(q: NormalizedText, o: NormalizedText, stats: CorpusStats = EMPTY_STATS) -> float:
    return weighted_cosine(Counter(q.tokens), Counter(o.tokens), stats)


def alignment_triple(q: str, o: str, stats: CorpusStats = EMPTY_STATS) -> AlignmentTriple:
    nq, no = normalize(q), normalize(o)
    return AlignmentTriple(tfidf_cosine(nq, no, stats), jaccard(nq, no), nls(nq, no))
