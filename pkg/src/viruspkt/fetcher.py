"""Fetching raw documents from configured HTTP sources.

Sources are explicit URLs from a JSON config file; there is no crawling.
Local identifiers are derived from the canonical URL so they are stable
across runs and machines. refresh_all drives the whole fetch -> convert ->
dedup -> store+index batch, isolating per-source failures.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional
from urllib.parse import urlsplit, urlunsplit

import requests

from .errors import (
    DuplicateSourceName,
    HttpError,
    InvalidUrl,
    IoError,
    MalformedConfig,
    NetworkError,
    StorageFull,
    StoreUnavailable,
    Timeout,
    TooLarge,
    TooManyRedirects,
    VirusPktError,
)
from .indexer import CATEGORIES, DEFAULT_PARAMS, EMPTY_LEXICON, CategoryLexicon, RankingParams, add_document
from .normalizer import NO_ADAPTERS, AdapterConfig, convert

if TYPE_CHECKING:
    from .indexer import Index
    from .store import Store

USER_AGENT = "viruspkt/1.0"
DEFAULT_TIMEOUT = 30.0
DEFAULT_BODY_CAP = 8 * 1024 * 1024  # bytes
MAX_REDIRECTS = 5
DEFAULT_MAX_PARALLEL = 4

_SOURCE_KEYS = {"name", "url", "category", "format_hint", "enabled"}


@dataclass
class SourceSpec:
    """One configured remote source."""

    name: str
    url: str
    category: str = "general"
    format_hint: Optional[str] = None
    enabled: bool = True


@dataclass
class RawDocument:
    """Fetched bytes plus provenance. The store finalizes the revision."""

    doc_id: str
    source_url: str
    fetched_at: int
    content_type: str
    body: bytes
    revision: int = 1


@dataclass
class RefreshReport:
    fetched: int = 0
    converted: int = 0
    indexed: int = 0
    skipped_duplicates: int = 0
    failed: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "fetched": self.fetched,
            "converted": self.converted,
            "indexed": self.indexed,
            "skipped_duplicates": self.skipped_duplicates,
            "failed": [{"source": name, "error": err} for name, err in self.failed],
        }


def canonicalize_url(url: str) -> str:
    """Normalize a URL to the form document identity is derived from.

    Scheme and host lowercase, default ports dropped, fragment dropped, the
    _cb cache-buster removed; all other query parameters keep their original
    order and encoding. The path is untouched.
    """
    try:
        parts = urlsplit(url)
        host = parts.hostname
        port = parts.port
    except ValueError as exc:
        raise InvalidUrl(f"{url!r}: {exc}") from exc
    scheme = parts.scheme.lower()
    if scheme not in ("http", "https"):
        raise InvalidUrl(f"{url!r}: scheme must be http or https")
    if not host:
        raise InvalidUrl(f"{url!r}: missing host")
    if ":" in host:  # IPv6 literal
        host = f"[{host}]"
    netloc = host
    if parts.username is not None:
        userinfo = parts.username
        if parts.password is not None:
            userinfo += f":{parts.password}"
        netloc = f"{userinfo}@{netloc}"
    if port is not None and not (scheme == "http" and port == 80) and not (scheme == "https" and port == 443):
        netloc += f":{port}"
    query = "&".join(p for p in parts.query.split("&")
                     if p and p != "_cb" and not p.startswith("_cb="))
    return urlunsplit((scheme, netloc, parts.path, query, ""))


def assign_doc_id(url: str) -> str:
    """First 16 hex chars of the SHA-256 of the canonical URL."""
    canonical = canonicalize_url(url)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def cache_busted_url(url: str, draw: int) -> str:
    """Append a _cb=<decimal> parameter to defeat client-side caching.

    The parameter is ignored by the server and stripped by canonicalize_url,
    so it never affects document identity.
    """
    try:
        parts = urlsplit(url)
    except ValueError as exc:
        raise InvalidUrl(f"{url!r}: {exc}") from exc
    if parts.scheme not in ("http", "https") or not parts.netloc:
        raise InvalidUrl(f"{url!r}: not an absolute http/https URL")
    param = f"_cb={draw}"
    query = f"{parts.query}&{param}" if parts.query else param
    return urlunsplit((parts.scheme, parts.netloc, parts.path, query, parts.fragment))


def load_source_config(path) -> list[SourceSpec]:
    """Read the JSON source list, in file order; disabled entries included."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedConfig(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, list):
        raise MalformedConfig(f"{path}: top level must be an array of sources")
    specs: list[SourceSpec] = []
    seen: set[str] = set()
    for i, entry in enumerate(data):
        where = f"{path}: source #{i + 1}"
        if not isinstance(entry, dict):
            raise MalformedConfig(f"{where}: not an object")
        unknown = set(entry) - _SOURCE_KEYS
        if unknown:
            raise MalformedConfig(f"{where}: unknown keys {sorted(unknown)}")
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise MalformedConfig(f"{where}: missing or empty name")
        if name in seen:
            raise DuplicateSourceName(f"{where}: duplicate source name {name!r}")
        seen.add(name)
        url = entry.get("url")
        if not isinstance(url, str):
            raise MalformedConfig(f"{where}: missing url")
        canonicalize_url(url)  # raises InvalidUrl on a bad scheme/host
        category = entry.get("category")
        if category not in CATEGORIES:
            raise MalformedConfig(f"{where}: category must be one of {list(CATEGORIES)}")
        format_hint = entry.get("format_hint")
        if format_hint is not None and not isinstance(format_hint, str):
            raise MalformedConfig(f"{where}: format_hint must be a string")
        enabled = entry.get("enabled", True)
        if not isinstance(enabled, bool):
            raise MalformedConfig(f"{where}: enabled must be a boolean")
        specs.append(SourceSpec(name=name, url=url, category=category,
                                format_hint=format_hint, enabled=enabled))
    return specs


def fetch_source(spec: SourceSpec, now: Optional[float] = None, *,
                 timeout: float = DEFAULT_TIMEOUT,
                 body_cap: int = DEFAULT_BODY_CAP) -> RawDocument:
    """GET one source, following at most 5 redirects, capping body size.

    The response content type comes from the header (empty if absent); the
    stored revision is provisional until the store assigns the real one.
    """
    if now is None:
        now = time.time()
    session = requests.Session()
    session.max_redirects = MAX_REDIRECTS
    headers = {"User-Agent": USER_AGENT}
    if spec.format_hint:
        headers["Accept"] = spec.format_hint
    try:
        resp = session.get(spec.url, headers=headers, timeout=timeout,
                           stream=True, allow_redirects=True)
    except requests.TooManyRedirects as exc:
        raise TooManyRedirects(f"{spec.url}: more than {MAX_REDIRECTS} redirects") from exc
    except requests.Timeout as exc:
        raise Timeout(f"{spec.url}: no response within {timeout}s") from exc
    except requests.RequestException as exc:
        raise NetworkError(f"{spec.url}: {exc}") from exc
    try:
        if not 200 <= resp.status_code < 300:
            raise HttpError(resp.status_code, spec.url)
        chunks: list[bytes] = []
        size = 0
        try:
            for chunk in resp.iter_content(chunk_size=65536):
                size += len(chunk)
                if size > body_cap:
                    raise TooLarge(f"{spec.url}: body exceeds {body_cap} bytes")
                chunks.append(chunk)
        except requests.Timeout as exc:
            raise Timeout(f"{spec.url}: read stalled past {timeout}s") from exc
        except requests.RequestException as exc:
            raise NetworkError(f"{spec.url}: {exc}") from exc
        content_type = resp.headers.get("Content-Type", "")
    finally:
        resp.close()
    return RawDocument(
        doc_id=assign_doc_id(spec.url),
        source_url=canonicalize_url(spec.url),
        fetched_at=int(now),
        content_type=content_type,
        body=b"".join(chunks),
    )


def _fetch_host_group(specs: list[SourceSpec], now: float, timeout: float,
                      body_cap: int) -> list[tuple[str, object]]:
    """Fetch one host's sources sequentially; exceptions become data."""
    out: list[tuple[str, object]] = []
    for spec in specs:
        try:
            out.append((spec.name, fetch_source(spec, now, timeout=timeout, body_cap=body_cap)))
        except Exception as exc:  # per-source isolation: any failure is recorded, not raised
            out.append((spec.name, exc))
    return out


def refresh_all(specs: list[SourceSpec], store: "Store", index: "Index",
                now: Optional[float] = None, *,
                adapters: AdapterConfig = NO_ADAPTERS,
                lexicon: CategoryLexicon = EMPTY_LEXICON,
                params: RankingParams = DEFAULT_PARAMS,
                max_parallel: int = DEFAULT_MAX_PARALLEL,
                timeout: float = DEFAULT_TIMEOUT,
                body_cap: int = DEFAULT_BODY_CAP,
                persist: bool = True) -> RefreshReport:
    """One full refresh: fetch, convert, dedup, store and index each source.

    Fetches run concurrently across hosts (serially within a host); store and
    index mutation happens in this thread, in source order. Per-source
    failures land in the report; only a store failure aborts the run.
    """
    if now is None:
        now = time.time()
    enabled = [s for s in specs if s.enabled]

    by_host: dict[str, list[SourceSpec]] = {}
    for spec in enabled:
        by_host.setdefault(urlsplit(spec.url).netloc, []).append(spec)
    outcomes: dict[str, object] = {}
    if by_host:
        with ThreadPoolExecutor(max_workers=max(1, max_parallel)) as pool:
            futures = [pool.submit(_fetch_host_group, group, now, timeout, body_cap)
                       for group in by_host.values()]
            for future in futures:
                outcomes.update(future.result())

    report = RefreshReport()
    for spec in enabled:
        outcome = outcomes[spec.name]
        if isinstance(outcome, Exception):
            report.failed.append((spec.name, str(outcome)))
            continue
        report.fetched += 1
        raw = outcome
        if not raw.content_type and spec.format_hint:
            # server sent no content type; fall back to the configured hint
            raw = replace(raw, content_type=spec.format_hint)
        try:
            doc = convert(raw, adapters, lexicon=lexicon,
                          source_default=spec.category, params=params)
        except VirusPktError as exc:
            report.failed.append((spec.name, str(exc)))
            continue
        report.converted += 1
        added = add_document(index, doc, params)
        if not added.indexed:
            report.skipped_duplicates += 1
            continue
        try:
            store.put_document(doc)
        except (IoError, StorageFull, OSError) as exc:
            raise StoreUnavailable(str(exc)) from exc
        report.indexed += 1
    if persist:
        try:
            store.persist_index(index)
        except (IoError, StorageFull, OSError) as exc:
            raise StoreUnavailable(str(exc)) from exc
    return report
