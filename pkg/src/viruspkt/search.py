"""Query parsing, BM25 ranking, near-duplicate collapsing, and snippets.

All operations here are pure reads over a consistent index snapshot. The
ranked order is fully deterministic: score descending, then fetched_at
descending, then doc_id ascending.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional

from .errors import EmptyQuery, UnknownCategory, UnknownDocument
from .indexer import (
    CATEGORIES,
    DEFAULT_PARAMS,
    Index,
    RankingParams,
    hamming_distance,
    token_spans,
    tokenize,
)

if TYPE_CHECKING:
    from .normalizer import NormalizedDocument

DEFAULT_LIMIT = 10
MAX_LIMIT = 100
SNIPPET_MAX_CHARS = 200


@dataclass
class Query:
    terms: list[str]
    category_filter: Optional[str] = None
    limit: int = DEFAULT_LIMIT


@dataclass
class SearchResult:
    doc_id: str
    score: float
    title: str
    snippet: str
    source_url: str
    category: str
    fetched_at: int
    duplicates: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "score": self.score,
            "snippet": self.snippet,
            "source_url": self.source_url,
            "category": self.category,
            "fetched_at": self.fetched_at,
            "duplicates": list(self.duplicates),
        }


def parse_query(raw: str, limit: int = DEFAULT_LIMIT,
                params: RankingParams = DEFAULT_PARAMS) -> Query:
    """Split a raw query into terms and an optional category filter.

    The first category:<value> token (case-insensitive) becomes the filter;
    any later ones are treated as ordinary text. Raises UnknownCategory for
    a bad filter value and EmptyQuery when no terms survive tokenization.
    """
    category: Optional[str] = None
    rest: list[str] = []
    for word in raw.split():
        lowered = word.lower()
        if category is None and lowered.startswith("category:"):
            value = lowered[len("category:"):]
            if value not in CATEGORIES:
                raise UnknownCategory(f"unknown category {value!r}")
            category = value
        else:
            rest.append(word)
    terms = tokenize(" ".join(rest), params)
    if not terms:
        raise EmptyQuery("no searchable terms in query")
    return Query(terms=terms, category_filter=category, limit=limit)


def _unique_terms(terms: list[str]) -> list[str]:
    seen = set()
    out = []
    for term in terms:
        if term not in seen:
            seen.add(term)
            out.append(term)
    return out


def bm25_score(index: Index, params: RankingParams, query: Query, doc_id: str) -> float:
    """BM25 over the query's distinct terms.

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5));
    per-term factor = tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl)).
    Terms absent from the document contribute 0.
    """
    stats = index.doc_stats.get(doc_id)
    if stats is None:
        raise UnknownDocument(f"doc {doc_id} not in index")
    n = index.doc_count
    avgdl = index.avgdl
    score = 0.0
    for term in _unique_terms(query.terms):
        tf = index.term_frequency(term, doc_id)
        if tf == 0:
            continue
        df = index.document_frequency(term)
        idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
        score += idf * (tf * (params.k1 + 1)) / (tf + params.k1 * (1 - params.b + params.b * stats.token_count / avgdl))
    return score


def rank(index: Index, params: RankingParams, query: Query) -> list[tuple[str, float]]:
    """Score and order every candidate document, before collapsing or limits.

    Candidates are documents containing at least one query term, narrowed by
    the category filter when present.
    """
    candidates: set[str] = set()
    for term in _unique_terms(query.terms):
        candidates.update(doc_id for doc_id, _ in index.postings.get(term, ()))
    if query.category_filter:
        candidates = {d for d in candidates
                      if index.doc_stats[d].category == query.category_filter}
    scored = [(doc_id, bm25_score(index, params, query, doc_id)) for doc_id in candidates]
    scored.sort(key=lambda pair: (-pair[1], -index.doc_stats[pair[0]].fetched_at, pair[0]))
    return scored


def _collapse_ids(ranked_ids: list[str], params: RankingParams,
                  index: Index) -> list[tuple[str, list[str]]]:
    """Greedy rank-order fold: each doc within the Hamming threshold of an
    already-kept doc is folded into that doc's duplicates list."""
    kept: list[tuple[str, list[str]]] = []
    for doc_id in ranked_ids:
        sig = index.doc_stats[doc_id].simhash
        for kept_id, duplicates in kept:
            if hamming_distance(sig, index.doc_stats[kept_id].simhash) <= params.simhash_collapse_distance:
                duplicates.append(doc_id)
                break
        else:
            kept.append((doc_id, []))
    return kept


def collapse_duplicates(results: list[SearchResult], params: RankingParams,
                        index: Index) -> list[SearchResult]:
    """Collapse near-duplicate results in rank order; kept order is unchanged."""
    folded = _collapse_ids([r.doc_id for r in results], params, index)
    by_id = {r.doc_id: r for r in results}
    out = []
    for doc_id, duplicates in folded:
        result = by_id[doc_id]
        result.duplicates = list(result.duplicates) + duplicates
        out.append(result)
    return out


def snippet(text: str, query: Query) -> str:
    """A window of up to 200 characters around the first query-term hit.

    Window edges snap to whitespace so words are not cut, a one-character
    ellipsis marks each truncated end, and internal whitespace runs collapse
    to single spaces. Without a hit, the leading 200 characters are used.
    """
    wanted = set(query.terms)
    match_span = None
    for term, start, end in token_spans(text):
        if term in wanted:
            match_span = (start, end)
            break

    if match_span is None:
        return " ".join(text[:SNIPPET_MAX_CHARS].split())

    if len(text) <= SNIPPET_MAX_CHARS:
        return " ".join(text.split())

    start, end = match_span
    budget = SNIPPET_MAX_CHARS - 2  # reserve room for the ellipses
    center = (start + end) // 2
    w0 = max(0, center - budget // 2)
    w1 = min(len(text), w0 + budget)
    if w1 - w0 < budget:
        w0 = max(0, w1 - budget)

    # Snap edges inward to whitespace, never crossing the matched term.
    if w0 > 0:
        while w0 < start and not text[w0 - 1].isspace():
            w0 += 1
    if w1 < len(text):
        while w1 > end and not text[w1].isspace():
            w1 -= 1

    prefix = "…" if w0 > 0 else ""
    suffix = "…" if w1 < len(text) else ""
    return prefix + " ".join(text[w0:w1].split()) + suffix


def run_query(index: Index, params: RankingParams, query: Query,
              get_doc: Callable[[str], "NormalizedDocument"]) -> tuple[list[SearchResult], int]:
    """Full search pipeline: rank, collapse, then materialize the top results.

    Returns (results, total) where total counts post-collapse matches before
    the limit is applied.
    """
    ranked = rank(index, params, query)
    folded = _collapse_ids([doc_id for doc_id, _ in ranked], params, index)
    scores = dict(ranked)
    results = []
    for doc_id, duplicates in folded[:query.limit]:
        doc = get_doc(doc_id)
        stats = index.doc_stats[doc_id]
        results.append(SearchResult(
            doc_id=doc_id,
            score=scores[doc_id],
            title=doc.title,
            snippet=snippet(doc.text, query),
            source_url=doc.source_url,
            category=stats.category,
            fetched_at=stats.fetched_at,
            duplicates=duplicates,
        ))
    return results, len(folded)


def search(index: Index, params: RankingParams, query: Query,
           get_doc: Callable[[str], "NormalizedDocument"]) -> list[SearchResult]:
    """Relevance-ranked, duplicate-collapsed results, at most query.limit."""
    results, _ = run_query(index, params, query, get_doc)
    return results
