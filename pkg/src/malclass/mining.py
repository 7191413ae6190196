"""Candidate-dialogue mining: BM25 over an n-gram lexicon, uncertainty band.

A lexicon entry is an n-gram of at most three tokens (one per line in the
lexicon file). The index tracks, per document, the occurrence counts of the
lexicon entries only, which keeps memory bounded by |lexicon| x |docs| and
lets the CLI stream pools of arbitrary size.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

from .errors import FileError, ParseError, ProbabilityRangeError, UnknownDocError
from .tokens import tokenize

__all__ = [
    "load_lexicon", "LexiconIndex", "build_lexicon_index", "bm25_score",
    "mine_candidates", "stream_mine", "uncertainty_filter", "iter_pool",
]

K1_DEFAULT, B_DEFAULT = 1.2, 0.75


def load_lexicon(path) -> list[str]:
    """One n-gram per line; entries longer than 3 tokens are rejected."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [line.strip() for line in fh]
    except OSError as exc:
        raise FileError(f"cannot read lexicon {path}: {exc}") from exc
    entries = []
    for no, line in enumerate(lines, start=1):
        if not line:
            continue
        n = len(tokenize(line))
        if n == 0:
            continue
        if n > 3:
            raise ParseError(f"lexicon entry {line!r} has {n} tokens (max 3)", no)
        entries.append(line)
    return entries


def _entry_terms(entries) -> list[tuple[str, ...]]:
    seen, ordered = set(), []
    for e in entries:
        term = tuple(tokenize(e)) if isinstance(e, str) else tuple(e)
        if term and term not in seen:
            seen.add(term)
            ordered.append(term)
    return ordered


def _count_ngram(tokens: list[str], term: tuple[str, ...]) -> int:
    n = len(term)
    if n == 1:
        return tokens.count(term[0])
    return sum(1 for i in range(len(tokens) - n + 1) if tuple(tokens[i:i + n]) == term)


def _idf(n_docs: int, df: int) -> float:
    return math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)


def _bm25(terms, tf_counts, doc_len, n_docs, avgdl, df, k1, b) -> float:
    score = 0.0
    for term in terms:
        f = tf_counts.get(term, 0)
        if f == 0:
            continue
        norm = k1 * (1 - b + b * doc_len / avgdl)
        score += _idf(n_docs, df.get(term, 0)) * (f * (k1 + 1)) / (f + norm)
    return score


@dataclass
class LexiconIndex:
    terms: list[tuple[str, ...]]
    doc_len: dict[str, int] = field(default_factory=dict)
    tf: dict[str, dict[tuple[str, ...], int]] = field(default_factory=dict)
    df: dict[tuple[str, ...], int] = field(default_factory=dict)
    total_len: int = 0

    @property
    def n_docs(self) -> int:
        return len(self.doc_len)

    @property
    def avgdl(self) -> float:
        return self.total_len / self.n_docs if self.n_docs else 0.0

    def add(self, doc_id: str, text: str):
        tokens = tokenize(text)
        counts = {}
        for term in self.terms:
            c = _count_ngram(tokens, term)
            if c:
                counts[term] = c
                self.df[term] = self.df.get(term, 0) + 1
        self.doc_len[doc_id] = len(tokens)
        self.tf[doc_id] = counts
        self.total_len += len(tokens)


def build_lexicon_index(lexicon, docs) -> LexiconIndex:
    """`docs` is an iterable of (doc_id, text) pairs."""
    index = LexiconIndex(terms=_entry_terms(lexicon))
    for doc_id, text in docs:
        index.add(doc_id, text)
    return index


def bm25_score(query_terms, doc_id: str, index: LexiconIndex,
               k1: float = K1_DEFAULT, b: float = B_DEFAULT) -> float:
    """Okapi BM25 with idf = ln((N - df + 0.5)/(df + 0.5) + 1).

    Each query term may itself be an n-gram ("kill you"); repeated query
    terms contribute once per occurrence; zero overlap scores 0. Terms the
    index does not track score 0 (the index's lexicon is the term universe).
    """
    if doc_id not in index.doc_len:
        raise UnknownDocError(f"document {doc_id!r} not in index")
    terms = [tuple(tokenize(t)) if isinstance(t, str) else tuple(t)
             for t in query_terms]
    return _bm25(terms, index.tf[doc_id], index.doc_len[doc_id],
                 index.n_docs, index.avgdl, index.df, k1, b)


def _best_entry_score(terms, tf_counts, doc_len, n_docs, avgdl, df, k1, b) -> float:
    """Mining score of one document: max BM25 over individual lexicon entries."""
    if not tf_counts:
        return 0.0
    return max(
        _bm25([t], tf_counts, doc_len, n_docs, avgdl, df, k1, b) for t in terms
    )


def mine_candidates(lexicon, dialogues, top_n: int,
                    k1: float = K1_DEFAULT, b: float = B_DEFAULT):
    """Rank dialogues by the best-matching lexicon entry.

    `dialogues` is an iterable of (dialogue_id, concatenated text). Returns
    the top_n (dialogue_id, score) pairs, highest score first, ties broken
    by dialogue_id.
    """
    index = build_lexicon_index(lexicon, dialogues)
    scored = [
        (doc_id,
         _best_entry_score(index.terms, index.tf[doc_id], index.doc_len[doc_id],
                           index.n_docs, index.avgdl, index.df, k1, b))
        for doc_id in index.doc_len
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:top_n]


class _ReverseStr:
    """Orders strings descending, so the min-heap evicts the largest id among
    equal scores (the kept set then matches ascending-id tie-break)."""

    __slots__ = ("value",)

    def __init__(self, value: str):
        self.value = value

    def __lt__(self, other):
        return self.value > other.value

    def __eq__(self, other):
        return self.value == other.value


def stream_mine(lexicon, doc_iter_factory, top_n: int,
                k1: float = K1_DEFAULT, b: float = B_DEFAULT):
    """Two-pass variant of mine_candidates with O(top_n) resident documents.

    `doc_iter_factory` is a zero-argument callable returning a fresh
    (doc_id, text) iterator; it is consumed twice (corpus statistics pass,
    then scoring pass). Scores are identical to mine_candidates.
    """
    terms = _entry_terms(lexicon)
    df: dict[tuple[str, ...], int] = {}
    n_docs, total_len = 0, 0
    for _, text in doc_iter_factory():
        tokens = tokenize(text)
        n_docs += 1
        total_len += len(tokens)
        for term in terms:
            if _count_ngram(tokens, term):
                df[term] = df.get(term, 0) + 1
    if n_docs == 0:
        return []
    avgdl = total_len / n_docs

    heap: list[tuple[float, _ReverseStr]] = []
    for doc_id, text in doc_iter_factory():
        tokens = tokenize(text)
        counts = {}
        for term in terms:
            c = _count_ngram(tokens, term)
            if c:
                counts[term] = c
        score = _best_entry_score(terms, counts, len(tokens), n_docs, avgdl, df, k1, b)
        item = (score, _ReverseStr(doc_id))
        if len(heap) < top_n:
            heapq.heappush(heap, item)
        elif item > heap[0]:
            heapq.heapreplace(heap, item)
    ranked = sorted(heap, key=lambda it: (-it[0], it[1].value))
    return [(it[1].value, it[0]) for it in ranked]


def iter_pool_turns(path):
    """Stream (dialogue_id, [turn texts]) from a JSONL pool file.

    Pool files follow the corpus schema but labels are optional: mining runs
    on unlabelled dialogues.
    """
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line_no) from exc
            turns = obj.get("turns")
            if not isinstance(turns, list):
                raise ParseError("expected object with a turns list", line_no)
            texts = [str(t.get("text", "")) for t in turns]
            yield str(obj.get("dialogue_id", line_no)), texts


def iter_pool(path):
    """Stream (dialogue_id, concatenated turn text) from a JSONL pool file."""
    for dlg_id, texts in iter_pool_turns(path):
        yield dlg_id, " ".join(texts)


def uncertainty_filter(probabilities, lo: float = 0.2, hi: float = 0.8) -> list:
    """Ids whose malevolence probability lies in [lo, hi], inclusive."""
    kept = []
    for item_id, p in probabilities:
        if not 0.0 <= p <= 1.0:
            raise ProbabilityRangeError(f"probability {p} for {item_id!r} outside [0, 1]")
        if lo <= p <= hi:
            kept.append(item_id)
    return kept
