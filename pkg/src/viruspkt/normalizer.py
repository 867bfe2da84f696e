"""Format detection and conversion of fetched bytes to canonical plain text.

Canonical text is the single standardized form every downstream stage works
on: valid UTF-8, NFC, LF-only line endings, no trailing whitespace on any
line, and exactly one trailing LF unless empty.
"""

from __future__ import annotations

import enum
import json
import shlex
import subprocess
import tempfile
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Optional
import re

from . import indexer
from .errors import (
    AdapterFailed,
    ConversionFailed,
    MalformedCsv,
    MalformedJson,
    UnsupportedFormat,
)
from .indexer import CategoryLexicon, EMPTY_LEXICON, DEFAULT_PARAMS, RankingParams

if TYPE_CHECKING:
    from .fetcher import RawDocument


class Format(enum.Enum):
    HTML = "html"
    CSV = "csv"
    JSON = "json"
    PLAIN_TEXT = "plaintext"
    PDF = "pdf"
    SPREADSHEET = "spreadsheet"
    UNKNOWN = "unknown"


# Formats that require an external conversion command.
EXTERNAL_FORMATS = (Format.PDF, Format.SPREADSHEET)

_HINT_MAP = {
    "text/html": Format.HTML,
    "text/csv": Format.CSV,
    "application/json": Format.JSON,
    "application/pdf": Format.PDF,
    "text/plain": Format.PLAIN_TEXT,
}

TITLE_MAX_CHARS = 120


@dataclass(frozen=True)
class AdapterConfig:
    """External command templates for binary formats (Pdf, Spreadsheet).

    Templates must contain the {in} and {out} placeholders; by default no
    adapter is configured and those formats are unsupported.
    """

    commands: dict[Format, str] = field(default_factory=dict)
    timeout: float = 60.0

    def __post_init__(self):
        for fmt, template in self.commands.items():
            if fmt not in EXTERNAL_FORMATS:
                raise ValueError(f"adapter not allowed for format {fmt.value!r}")
            if "{in}" not in template or "{out}" not in template:
                raise ValueError(f"adapter template for {fmt.value!r} must use {{in}} and {{out}}")


NO_ADAPTERS = AdapterConfig()


@dataclass
class NormalizedDocument:
    """Canonical document: text plus the hashes and stats derived from it."""

    doc_id: str
    revision: int
    title: str
    text: str
    category: str
    content_hash: bytes
    simhash: int
    token_count: int
    source_url: str
    fetched_at: int


def normalize_text(text: str) -> str:
    """Reduce text to canonical form. Idempotent.

    NFC, CRLF/CR -> LF, trailing whitespace stripped per line, runs of 3+
    blank lines collapsed to one, leading/trailing blank lines removed,
    exactly one trailing LF unless the result is empty.
    """
    if not text:
        return ""
    text = unicodedata.normalize("NFC", text)
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    lines = [line.rstrip() for line in text.split("\n")]
    out: list[str] = []
    blanks = 0
    for line in lines:
        if not line:
            blanks += 1
            continue
        if out and blanks:
            out.extend([""] if blanks >= 3 else [""] * blanks)
        out.append(line)
        blanks = 0
    if not out:
        return ""
    return "\n".join(out) + "\n"


def detect_format(body: bytes, hint: str = "") -> Format:
    """Sniff a body's format; magic bytes beat the content-type hint."""
    if body.startswith(b"%PDF-"):
        return Format.PDF
    if body.startswith(b"PK\x03\x04"):
        return Format.SPREADSHEET
    head = body[:1024].lower()
    if b"<html" in head or b"<!doctype html" in head:
        return Format.HTML
    stripped = body.lstrip()
    if stripped[:1] in (b"{", b"["):
        try:
            json.loads(body.decode("utf-8"))
            return Format.JSON
        except (UnicodeDecodeError, json.JSONDecodeError):
            pass
    media_type = hint.split(";", 1)[0].strip().lower()
    if media_type in _HINT_MAP:
        return _HINT_MAP[media_type]
    try:
        body.decode("utf-8")
        return Format.PLAIN_TEXT
    except UnicodeDecodeError:
        return Format.UNKNOWN


_COMMENT_RE = re.compile(r"<!--.*?(?:-->|\Z)", re.S)
_SCRIPT_RE = re.compile(r"<script\b[^>]*>.*?(?:</script\s*>|\Z)", re.I | re.S)
_STYLE_RE = re.compile(r"<style\b[^>]*>.*?(?:</style\s*>|\Z)", re.I | re.S)
_BLOCK_TAG_RE = re.compile(r"</?(?:p|div|br|li|tr|h[1-6]|table)\b[^>]*/?>", re.I)
_TAG_RE = re.compile(r"<[^>]*>")
_CHARREF_RE = re.compile(r"&(#[0-9]+|#[xX][0-9a-fA-F]+|[a-zA-Z]+);")
_SPACE_RUN_RE = re.compile(r"[ \t]+")

_NAMED_REFS = {"amp": "&", "lt": "<", "gt": ">", "quot": '"', "apos": "'", "nbsp": " "}


def _decode_charref(match: re.Match) -> str:
    ref = match.group(1)
    if ref.startswith("#"):
        try:
            code = int(ref[2:], 16) if ref[1] in "xX" else int(ref[1:])
        except ValueError:
            return match.group(0)
        if 0 <= code <= 0x10FFFF and not 0xD800 <= code <= 0xDFFF:
            return chr(code)
        return match.group(0)
    return _NAMED_REFS.get(ref, match.group(0))


def html_to_text(body: bytes) -> str:
    """Strip HTML down to canonical text.

    Lenient and rule-based, not a tree parser: comments and script/style
    content are dropped (unterminated ones swallow to end of input), block
    tags become line breaks, all other tags vanish, character references
    decode in a single pass (so &amp;lt; yields a literal '&lt;').
    """
    text = body.decode("utf-8", errors="replace")
    text = _COMMENT_RE.sub("", text)
    text = _SCRIPT_RE.sub("", text)
    text = _STYLE_RE.sub("", text)
    text = _BLOCK_TAG_RE.sub("\n", text)
    text = _TAG_RE.sub("", text)
    text = _CHARREF_RE.sub(_decode_charref, text)
    text = _SPACE_RUN_RE.sub(" ", text)
    return normalize_text(text)


def csv_to_text(body: bytes) -> str:
    """Render CSV records one per line with cells joined by " | ".

    Quoted fields, embedded commas/newlines, and doubled quotes are handled;
    records end at CRLF, LF, or a lone CR. An unterminated quote raises
    MalformedCsv with the 1-based record number where the quote opened.
    """
    text = body.decode("utf-8")
    lines: list[str] = []
    record: list[str] = []
    cell: list[str] = []
    record_num = 1
    i, n = 0, len(text)
    in_quoted = False
    after_quoted = False

    def end_record():
        nonlocal record, cell, after_quoted
        record.append("".join(cell))
        lines.append(" | ".join(record))
        record, cell = [], []
        after_quoted = False

    while i < n:
        ch = text[i]
        if in_quoted:
            if ch == '"':
                if i + 1 < n and text[i + 1] == '"':
                    cell.append('"')
                    i += 2
                    continue
                in_quoted = False
                after_quoted = True
            else:
                cell.append(ch)
            i += 1
            continue
        if ch == ",":
            record.append("".join(cell))
            cell = []
            after_quoted = False
        elif ch in "\r\n":
            if ch == "\r" and i + 1 < n and text[i + 1] == "\n":
                i += 1
            end_record()
            record_num += 1
        elif ch == '"' and not cell and not after_quoted:
            in_quoted = True
        else:
            cell.append(ch)
        i += 1

    if in_quoted:
        raise MalformedCsv("unterminated quoted field", record=record_num)
    if record or cell:
        end_record()
    return normalize_text("\n".join(lines) + ("\n" if lines else ""))


def _flatten_json(value, path: str, out: list[str]) -> None:
    if isinstance(value, dict):
        for key, child in value.items():
            _flatten_json(child, f"{path}.{key}" if path else key, out)
    elif isinstance(value, list):
        for i, child in enumerate(value):
            _flatten_json(child, f"{path}[{i}]", out)
    else:
        if value is True:
            rendered = "true"
        elif value is False:
            rendered = "false"
        elif value is None:
            rendered = "null"
        else:
            rendered = str(value)
        out.append(f"{path}: {rendered}" if path else rendered)


def json_to_text(body: bytes) -> str:
    """Flatten a JSON document to one "path: value" line per scalar.

    Object keys join with ".", array elements address as "[i]", keys keep
    document order. Strings render as their decoded values; numbers keep
    their literal source lexeme.
    """
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedJson("invalid UTF-8", offset=exc.start) from exc
    try:
        value = json.loads(text, parse_int=str, parse_float=str, parse_constant=str)
    except json.JSONDecodeError as exc:
        byte_offset = len(text[:exc.pos].encode("utf-8"))
        raise MalformedJson(exc.msg, offset=byte_offset) from exc
    out: list[str] = []
    _flatten_json(value, "", out)
    return normalize_text("\n".join(out) + ("\n" if out else ""))


def external_convert(body: bytes, format: Format,
                     adapters: AdapterConfig = NO_ADAPTERS) -> str:
    """Convert a binary format through its configured external command.

    The body lands in a private temp file, {in}/{out} are substituted into
    the command template, and the command's output file is read back as
    UTF-8. Temp files are removed on every path.
    """
    if format not in EXTERNAL_FORMATS:
        raise ValueError(f"external_convert only handles {[f.value for f in EXTERNAL_FORMATS]}")
    template = adapters.commands.get(format)
    if template is None:
        raise UnsupportedFormat(f"no adapter configured for {format.value}")
    with tempfile.TemporaryDirectory(prefix="viruspkt-adapter-") as tmp:
        in_path = str(Path(tmp) / "input.bin")
        out_path = str(Path(tmp) / "output.txt")
        Path(in_path).write_bytes(body)
        argv = [arg.replace("{in}", in_path).replace("{out}", out_path)
                for arg in shlex.split(template)]
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=adapters.timeout)
        except subprocess.TimeoutExpired as exc:
            raise AdapterFailed(f"adapter timed out after {adapters.timeout}s") from exc
        except OSError as exc:
            raise AdapterFailed(f"adapter could not run: {exc}") from exc
        if proc.returncode != 0:
            detail = proc.stderr.decode("utf-8", errors="replace").strip()
            raise AdapterFailed(f"adapter exited {proc.returncode}: {detail[:200]}")
        try:
            text = Path(out_path).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise AdapterFailed(f"adapter output unreadable: {exc}") from exc
    return normalize_text(text)


def _title_of(text: str) -> str:
    for line in text.split("\n"):
        if line.strip():
            return line[:TITLE_MAX_CHARS]
    return ""


def convert(raw: "RawDocument", adapters: AdapterConfig = NO_ADAPTERS, *,
            lexicon: CategoryLexicon = EMPTY_LEXICON,
            source_default: str = "general",
            params: RankingParams = DEFAULT_PARAMS) -> NormalizedDocument:
    """Detect a raw document's format and produce its canonical form."""
    fmt = detect_format(raw.body, raw.content_type)
    if fmt is Format.UNKNOWN:
        raise ConversionFailed(f"doc {raw.doc_id}: unrecognized format")
    if fmt is Format.HTML:
        text = html_to_text(raw.body)
    elif fmt is Format.CSV:
        text = csv_to_text(raw.body)
    elif fmt is Format.JSON:
        text = json_to_text(raw.body)
    elif fmt is Format.PLAIN_TEXT:
        text = normalize_text(raw.body.decode("utf-8", errors="replace"))
    else:
        text = external_convert(raw.body, fmt, adapters)

    terms = indexer.tokenize(text, params)
    return NormalizedDocument(
        doc_id=raw.doc_id,
        revision=raw.revision,
        title=_title_of(text),
        text=text,
        category=indexer.categorize(terms, lexicon, source_default),
        content_hash=indexer.content_hash(text),
        simhash=indexer.simhash(terms),
        token_count=len(terms),
        source_url=raw.source_url,
        fetched_at=raw.fetched_at,
    )
