"""Service configuration file loading.

The config is one JSON object:
    {
      "port": 8080,
      "data_dir": "path/to/store",
      "sources_file": "sources.json",
      "idle_ttl_seconds": 1800,
      "adapters": {"pdf": "pdftotext {in} {out}"},
      "category_lexicon": {"structure": ["capsid", ...], ...},
      "stopwords_file": "stopwords.txt",        // optional
      "refresh_interval_seconds": 0,             // optional, 0 = manual only
      "webui_dir": "frontend/dist"               // optional static UI root
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .auth import DEFAULT_IDLE_TTL
from .errors import MalformedConfig
from .indexer import CategoryLexicon, RankingParams
from .normalizer import AdapterConfig, Format

DEFAULT_PORT = 8080

_FORMAT_NAMES = {"pdf": Format.PDF, "spreadsheet": Format.SPREADSHEET}
_KNOWN_KEYS = {"port", "data_dir", "sources_file", "idle_ttl_seconds", "adapters",
               "category_lexicon", "stopwords_file", "refresh_interval_seconds",
               "webui_dir"}


@dataclass
class AppConfig:
    data_dir: Path
    port: int = DEFAULT_PORT
    sources_file: Optional[Path] = None
    idle_ttl_seconds: int = DEFAULT_IDLE_TTL
    adapters: AdapterConfig = field(default_factory=AdapterConfig)
    lexicon: CategoryLexicon = field(default_factory=CategoryLexicon)
    params: RankingParams = field(default_factory=RankingParams)
    refresh_interval_seconds: int = 0
    webui_dir: Optional[Path] = None


def load_stopwords(path: Path) -> frozenset[str]:
    """One lowercase term per line; blank lines ignored."""
    words = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        word = line.strip()
        if word:
            words.add(word.lower())
    return frozenset(words)


def parse_lexicon(raw: dict) -> CategoryLexicon:
    triggers = {}
    for category, terms in raw.items():
        if not isinstance(terms, list) or not all(isinstance(t, str) for t in terms):
            raise MalformedConfig(f"category_lexicon[{category!r}] must be a list of strings")
        triggers[category] = frozenset(t.lower() for t in terms)
    try:
        return CategoryLexicon(triggers)
    except ValueError as exc:
        raise MalformedConfig(str(exc)) from exc


def parse_adapters(raw: dict) -> AdapterConfig:
    commands = {}
    for name, template in raw.items():
        fmt = _FORMAT_NAMES.get(str(name).lower())
        if fmt is None:
            raise MalformedConfig(f"adapters: unknown format {name!r} "
                                  f"(allowed: {sorted(_FORMAT_NAMES)})")
        if not isinstance(template, str):
            raise MalformedConfig(f"adapters[{name!r}] must be a command template string")
        commands[fmt] = template
    try:
        return AdapterConfig(commands)
    except ValueError as exc:
        raise MalformedConfig(str(exc)) from exc


def load_config(path) -> AppConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedConfig(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise MalformedConfig(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise MalformedConfig(f"{path}: top level must be an object")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise MalformedConfig(f"{path}: unknown keys {sorted(unknown)}")
    if "data_dir" not in raw:
        raise MalformedConfig(f"{path}: data_dir is required")

    base = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    stopwords = None
    if raw.get("stopwords_file"):
        stopword_path = resolve(raw["stopwords_file"])
        if not stopword_path.exists():
            raise MalformedConfig(f"{path}: stopwords_file {stopword_path} does not exist")
        stopwords = load_stopwords(stopword_path)

    try:
        port = int(raw.get("port", DEFAULT_PORT))
        idle_ttl = int(raw.get("idle_ttl_seconds", DEFAULT_IDLE_TTL))
        refresh_interval = int(raw.get("refresh_interval_seconds", 0))
    except (TypeError, ValueError) as exc:
        raise MalformedConfig(f"{path}: ports, TTLs and intervals must be integers") from exc
    if idle_ttl <= 0:
        raise MalformedConfig(f"{path}: idle_ttl_seconds must be positive")

    return AppConfig(
        data_dir=resolve(raw["data_dir"]),
        port=port,
        sources_file=resolve(raw["sources_file"]) if raw.get("sources_file") else None,
        idle_ttl_seconds=idle_ttl,
        adapters=parse_adapters(raw.get("adapters", {})),
        lexicon=parse_lexicon(raw.get("category_lexicon", {})),
        params=RankingParams(stopwords=stopwords),
        refresh_interval_seconds=refresh_interval,
        webui_dir=resolve(raw["webui_dir"]) if raw.get("webui_dir") else None,
    )
