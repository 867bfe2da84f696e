"""Tokenization, dedup signatures, category tagging, and the inverted index.

The index maps term -> postings (doc_id, term_frequency) and keeps the
per-document and corpus statistics the ranking code needs (document length,
document count, total token count). Exact duplicates are detected here by
content hash; near-duplicate folding happens at result time in search.
"""

from __future__ import annotations

import hashlib
import itertools
from bisect import insort
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Iterator, Optional

from .errors import InvariantViolation

if TYPE_CHECKING:
    from .normalizer import NormalizedDocument

CATEGORIES = ("structure", "evolution", "function", "general")

# Minimum lexicon hits before a category wins over the source default.
CATEGORY_HIT_THRESHOLD = 3

# Tie priority when two categories reach the same hit count.
_CATEGORY_PRIORITY = ("structure", "evolution", "function")


@dataclass(frozen=True)
class RankingParams:
    """Ranking and dedup knobs. Defaults are the project-wide fixed choices."""

    k1: float = 1.2
    b: float = 0.75
    min_token_len: int = 2
    max_token_len: int = 40
    simhash_collapse_distance: int = 3
    stopwords: Optional[frozenset[str]] = None

    def __post_init__(self):
        if self.k1 <= 0:
            raise ValueError("k1 must be > 0")
        if not 0 <= self.b <= 1:
            raise ValueError("b must be within [0, 1]")
        if not 0 <= self.simhash_collapse_distance <= 64:
            raise ValueError("simhash_collapse_distance must be within 0..64")


DEFAULT_PARAMS = RankingParams()


@dataclass(frozen=True)
class CategoryLexicon:
    """Lowercase trigger terms per category; 'general' is the fallback and has none."""

    triggers: dict[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        for category in self.triggers:
            if category not in ("structure", "evolution", "function"):
                raise ValueError(f"no lexicon allowed for category {category!r}")


EMPTY_LEXICON = CategoryLexicon()


def token_spans(text: str, params: RankingParams = DEFAULT_PARAMS) -> Iterator[tuple[str, int, int]]:
    """Yield (term, start, end) for each token of text, in order.

    A token is a maximal run of Unicode letters and digits, lowercased.
    Terms outside the configured length bounds (measured after lowercasing)
    or in the stopword set are dropped.
    """
    pos = 0
    for is_word, run in itertools.groupby(text, key=str.isalnum):
        chunk = "".join(run)
        start, pos = pos, pos + len(chunk)
        if not is_word:
            continue
        term = chunk.lower()
        if not params.min_token_len <= len(term) <= params.max_token_len:
            continue
        if params.stopwords and term in params.stopwords:
            continue
        yield term, start, pos


def tokenize(text: str, params: RankingParams = DEFAULT_PARAMS) -> list[str]:
    """Tokenize canonical text; duplicates and order are preserved."""
    return [term for term, _, _ in token_spans(text, params)]


def content_hash(text: str) -> bytes:
    """SHA-256 of the text's UTF-8 bytes (exact-duplicate detection)."""
    return hashlib.sha256(text.encode("utf-8")).digest()


def simhash(terms: Iterable[str]) -> int:
    """64-bit SimHash over a term multiset.

    Each distinct term hashes to 64 bits (first 8 bytes of its SHA-256,
    big-endian); every bit position accumulates +tf where the term hash has
    a 1 bit and -tf where it has a 0 bit. Output bit = 1 where the
    accumulator is positive; a tie (exactly zero) resolves to 0.
    """
    acc = [0] * 64
    for term, tf in Counter(terms).items():
        h = int.from_bytes(hashlib.sha256(term.encode("utf-8")).digest()[:8], "big")
        for j in range(64):
            if (h >> j) & 1:
                acc[j] += tf
            else:
                acc[j] -= tf
    sig = 0
    for j in range(64):
        if acc[j] > 0:
            sig |= 1 << j
    return sig


def hamming_distance(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def categorize(terms: Iterable[str], lexicon: CategoryLexicon = EMPTY_LEXICON,
               source_default: str = "general") -> str:
    """Pick a category from lexicon hits, falling back to the source default.

    Hits are counted per occurrence over the term list. The best category
    wins only with >= 3 hits; ties break structure > evolution > function.
    """
    if source_default not in CATEGORIES:
        raise ValueError(f"unknown category {source_default!r}")
    counts = {cat: 0 for cat in _CATEGORY_PRIORITY}
    trigger_sets = {cat: lexicon.triggers.get(cat, frozenset()) for cat in counts}
    for term in terms:
        for cat, triggers in trigger_sets.items():
            if term in triggers:
                counts[cat] += 1
    best = max(counts.values(), default=0)
    if best >= CATEGORY_HIT_THRESHOLD:
        for cat in _CATEGORY_PRIORITY:
            if counts[cat] == best:
                return cat
    return source_default


@dataclass
class DocStats:
    token_count: int
    fetched_at: int
    category: str
    simhash: int


@dataclass
class DedupOutcome:
    """Result of add_document: indexed, or skipped as an exact duplicate."""

    indexed: bool
    duplicate_of: Optional[str] = None


class Index:
    """Inverted index with corpus statistics.

    postings: term -> [(doc_id, tf), ...] sorted by doc_id.
    doc_stats: doc_id -> DocStats.
    Content hashes are kept per doc for exact-duplicate detection; they are
    not part of the persisted index file and are restored from the store
    manifest on load.
    """

    def __init__(self):
        self.postings: dict[str, list[tuple[str, int]]] = {}
        self.doc_stats: dict[str, DocStats] = {}
        self.total_tokens: int = 0
        self.content_hashes: dict[str, bytes] = {}
        self._hash_owner: dict[bytes, str] = {}
        self._doc_terms: dict[str, dict[str, int]] = {}

    @property
    def doc_count(self) -> int:
        return len(self.doc_stats)

    @property
    def avgdl(self) -> float:
        n = self.doc_count
        return self.total_tokens / n if n else 0.0

    def term_frequency(self, term: str, doc_id: str) -> int:
        return self._doc_terms.get(doc_id, {}).get(term, 0)

    def document_frequency(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Index):
            return NotImplemented
        return (self.postings == other.postings
                and self.doc_stats == other.doc_stats
                and self.total_tokens == other.total_tokens)

    def copy(self) -> "Index":
        dup = Index()
        dup.postings = {t: list(p) for t, p in self.postings.items()}
        dup.doc_stats = {d: DocStats(s.token_count, s.fetched_at, s.category, s.simhash)
                         for d, s in self.doc_stats.items()}
        dup.total_tokens = self.total_tokens
        dup.content_hashes = dict(self.content_hashes)
        dup._hash_owner = dict(self._hash_owner)
        dup._doc_terms = {d: dict(tf) for d, tf in self._doc_terms.items()}
        return dup

    def set_content_hash(self, doc_id: str, digest: bytes) -> None:
        self.content_hashes[doc_id] = digest
        self._hash_owner.setdefault(digest, doc_id)

    def _remove_document(self, doc_id: str) -> None:
        for term in self._doc_terms.pop(doc_id, {}):
            entries = self.postings[term]
            entries[:] = [e for e in entries if e[0] != doc_id]
            if not entries:
                del self.postings[term]
        stats = self.doc_stats.pop(doc_id)
        self.total_tokens -= stats.token_count
        digest = self.content_hashes.pop(doc_id, None)
        if digest is not None and self._hash_owner.get(digest) == doc_id:
            del self._hash_owner[digest]


def add_document(index: Index, doc: "NormalizedDocument",
                 params: RankingParams = DEFAULT_PARAMS) -> DedupOutcome:
    """Index one document, skipping exact duplicates by content hash.

    Re-adding an existing doc_id with changed text atomically replaces its
    previous postings. Raises InvariantViolation when the document's stated
    token_count disagrees with tokenizing its text.
    """
    terms = tokenize(doc.text, params)
    if len(terms) != doc.token_count:
        raise InvariantViolation(
            f"doc {doc.doc_id}: token_count {doc.token_count} != tokenize() length {len(terms)}")

    owner = index._hash_owner.get(doc.content_hash)
    if owner is not None:
        return DedupOutcome(indexed=False, duplicate_of=owner)

    if doc.doc_id in index.doc_stats:
        index._remove_document(doc.doc_id)

    counts = Counter(terms)
    for term, tf in counts.items():
        insort(index.postings.setdefault(term, []), (doc.doc_id, tf))
    index._doc_terms[doc.doc_id] = dict(counts)
    index.doc_stats[doc.doc_id] = DocStats(
        token_count=doc.token_count,
        fetched_at=doc.fetched_at,
        category=doc.category,
        simhash=doc.simhash,
    )
    index.total_tokens += doc.token_count
    index.set_content_hash(doc.doc_id, doc.content_hash)
    return DedupOutcome(indexed=True)


def build_index(docs: Iterable["NormalizedDocument"],
                params: RankingParams = DEFAULT_PARAMS) -> Index:
    """Fold add_document over docs in order (first occurrence wins on dups)."""
    index = Index()
    for doc in docs:
        add_document(index, doc, params)
    return index
