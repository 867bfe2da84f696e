"""File-backed persistence for documents, the index, users, and Protkut data.

Layout under the store root:
    .lock               writer lock (flock; released by the kernel on death)
    manifest.jsonl      append-only document revision records
    docs/<id>-r<n>.txt  canonical text, one file per revision
    index/current.idx   persisted inverted index, line-oriented
    users.jsonl         user records (rewritten atomically on change)
    communities.jsonl   community records (rewritten atomically on change)
    scraps.jsonl        scrap records (append-only)

All file publication goes through write-to-temp-then-rename, so a crash at
any point leaves either the old or the new state, never a torn file. A torn
final manifest line (crash mid-append) is truncated away on writer open.
"""

from __future__ import annotations

import errno
import fcntl
import json
import os
import tempfile
from pathlib import Path
from typing import Optional

from .auth import User
from .errors import Corrupt, IoError, Locked, MissingIndex, NotFound, StorageFull
from .indexer import DocStats, Index, tokenize
from .normalizer import NormalizedDocument
from .protkut import Community, Scrap

INDEX_HEADER = "viruspkt-index v1"

# Separable seam so crash-injection tests can fail the publish step.
replace_file = os.replace


def _wrap_os_error(exc: OSError) -> Exception:
    if exc.errno == errno.ENOSPC:
        return StorageFull(str(exc))
    return IoError(str(exc))


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write data to path via temp file + fsync + rename."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        replace_file(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class Store:
    """One data directory. A single writer at a time; any number of readers."""

    def __init__(self, root, read_only: bool = False):
        self.root = Path(root)
        self.read_only = read_only
        self._lock_fh = None
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "docs").mkdir(exist_ok=True)
        (self.root / "index").mkdir(exist_ok=True)
        for name in ("manifest.jsonl", "users.jsonl", "communities.jsonl", "scraps.jsonl"):
            path = self.root / name
            if not path.exists() and not read_only:
                path.touch()
        if not read_only:
            self._acquire_lock()
        try:
            self._load_manifest()
            self._load_users()
            self._load_communities()
            self._load_scraps()
        except BaseException:
            self.close()
            raise

    # --- lifecycle -----------------------------------------------------

    def _acquire_lock(self):
        fh = open(self.root / ".lock", "a+")
        try:
            fcntl.flock(fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            fh.close()
            raise Locked(f"another writer holds {self.root}")
        self._lock_fh = fh

    def close(self):
        if self._lock_fh is not None:
            fcntl.flock(self._lock_fh.fileno(), fcntl.LOCK_UN)
            self._lock_fh.close()
            self._lock_fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _require_writer(self):
        if self.read_only:
            raise IoError("store opened read-only")

    # --- manifest / documents --------------------------------------------

    def _read_jsonl(self, name: str, repair: bool) -> list[dict]:
        path = self.root / name
        if not path.exists():
            return []
        data = path.read_bytes()
        records: list[dict] = []
        lines = data.split(b"\n")
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                is_last = lineno == len(lines) or all(not l.strip() for l in lines[lineno:])
                if is_last:
                    # torn tail from a crash mid-append: roll back to old state
                    if repair and not self.read_only:
                        keep = b"\n".join(lines[:lineno - 1])
                        atomic_write_bytes(path, keep + (b"\n" if keep else b""))
                    return records
                raise Corrupt(f"{name}: line {lineno}: unparsable record")
        return records

    def _load_manifest(self):
        self.manifest: list[dict] = self._read_jsonl("manifest.jsonl", repair=True)
        self._revisions: dict[str, list[dict]] = {}
        for rec in self.manifest:
            for key in ("doc_id", "revision", "path"):
                if key not in rec:
                    raise Corrupt(f"manifest.jsonl: record missing {key!r}: {rec}")
            self._revisions.setdefault(rec["doc_id"], []).append(rec)
        for doc_id, recs in self._revisions.items():
            recs.sort(key=lambda r: r["revision"])
            if [r["revision"] for r in recs] != list(range(1, len(recs) + 1)):
                raise Corrupt(f"manifest.jsonl: doc {doc_id}: revisions not dense from 1")
            for rec in recs:
                if not (self.root / rec["path"]).exists():
                    raise Corrupt(f"manifest.jsonl: doc {doc_id} r{rec['revision']}: "
                                  f"missing file {rec['path']}")

    def _append_jsonl(self, name: str, record: dict) -> None:
        path = self.root / name
        try:
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, separators=(",", ":"), sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise _wrap_os_error(exc) from exc

    def put_document(self, doc: NormalizedDocument) -> int:
        """Persist one canonical document revision; returns the revision."""
        self._require_writer()
        recs = self._revisions.get(doc.doc_id, [])
        revision = recs[-1]["revision"] + 1 if recs else 1
        rel_path = f"docs/{doc.doc_id}-r{revision}.txt"
        try:
            atomic_write_text(self.root / rel_path, doc.text)
        except OSError as exc:
            raise _wrap_os_error(exc) from exc
        record = {
            "doc_id": doc.doc_id,
            "revision": revision,
            "source_url": doc.source_url,
            "fetched_at": doc.fetched_at,
            "content_hash": doc.content_hash.hex(),
            "simhash": f"{doc.simhash:016x}",
            "category": doc.category,
            "title": doc.title,
            "path": rel_path,
        }
        self._append_jsonl("manifest.jsonl", record)
        self.manifest.append(record)
        self._revisions.setdefault(doc.doc_id, []).append(record)
        return revision

    def get_document(self, doc_id: str, revision: Optional[int] = None) -> NormalizedDocument:
        """Fetch a stored revision (the highest when revision is omitted)."""
        recs = self._revisions.get(doc_id)
        if not recs:
            raise NotFound(f"doc {doc_id}")
        if revision is None:
            rec = recs[-1]
        else:
            matches = [r for r in recs if r["revision"] == revision]
            if not matches:
                raise NotFound(f"doc {doc_id} revision {revision}")
            rec = matches[0]
        try:
            text = (self.root / rec["path"]).read_text(encoding="utf-8")
        except OSError as exc:
            raise _wrap_os_error(exc) from exc
        return NormalizedDocument(
            doc_id=doc_id,
            revision=rec["revision"],
            title=rec["title"],
            text=text,
            category=rec["category"],
            content_hash=bytes.fromhex(rec["content_hash"]),
            simhash=int(rec["simhash"], 16),
            token_count=len(tokenize(text)),
            source_url=rec["source_url"],
            fetched_at=rec["fetched_at"],
        )

    def doc_ids(self) -> list[str]:
        return sorted(self._revisions)

    def latest_content_hash(self, doc_id: str) -> Optional[bytes]:
        recs = self._revisions.get(doc_id)
        return bytes.fromhex(recs[-1]["content_hash"]) if recs else None

    # --- index persistence --------------------------------------------------

    def index_path(self) -> Path:
        return self.root / "index" / "current.idx"

    def persist_index(self, index: Index) -> None:
        """Write the index in the line-oriented v1 format, atomically."""
        self._require_writer()
        lines = [INDEX_HEADER, f"N={index.doc_count} TT={index.total_tokens}"]
        for doc_id in sorted(index.doc_stats):
            s = index.doc_stats[doc_id]
            lines.append(f"D {doc_id} {s.token_count} {s.fetched_at} {s.category} {s.simhash:016x}")
        for term in sorted(index.postings):
            entries = ",".join(f"{doc_id}:{tf}" for doc_id, tf in index.postings[term])
            lines.append(f"T {term}\t{entries}")
        try:
            atomic_write_text(self.index_path(), "\n".join(lines) + "\n")
        except OSError as exc:
            raise _wrap_os_error(exc) from exc

    def load_index(self) -> Index:
        """Read back the persisted index, validating internal consistency."""
        path = self.index_path()
        if not path.exists():
            raise MissingIndex(f"no index at {path}")
        index = Index()
        declared_n = declared_tt = None
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or lines[0] != INDEX_HEADER:
            raise Corrupt(f"index: line 1: bad header {lines[0][:40]!r}" if lines
                          else "index: empty file")
        for lineno, line in enumerate(lines[1:], start=2):
            if lineno == 2:
                try:
                    n_part, tt_part = line.split(" ")
                    declared_n = int(n_part.removeprefix("N="))
                    declared_tt = int(tt_part.removeprefix("TT="))
                except ValueError as exc:
                    raise Corrupt("index: line 2: bad stats line") from exc
                continue
            if line.startswith("D "):
                try:
                    _, doc_id, token_count, fetched_at, category, sim_hex = line.split(" ")
                    index.doc_stats[doc_id] = DocStats(
                        token_count=int(token_count),
                        fetched_at=int(fetched_at),
                        category=category,
                        simhash=int(sim_hex, 16),
                    )
                    index.total_tokens += int(token_count)
                except ValueError as exc:
                    raise Corrupt(f"index: line {lineno}: bad doc line") from exc
            elif line.startswith("T "):
                try:
                    head, entries = line[2:].split("\t")
                    postings = []
                    for item in entries.split(","):
                        doc_id, tf = item.rsplit(":", 1)
                        postings.append((doc_id, int(tf)))
                except ValueError as exc:
                    raise Corrupt(f"index: line {lineno}: bad posting line") from exc
                if postings != sorted(postings):
                    raise Corrupt(f"index: line {lineno}: postings not sorted by doc_id")
                for doc_id, tf in postings:
                    if doc_id not in index.doc_stats:
                        raise Corrupt(f"index: line {lineno}: posting for unknown doc {doc_id}")
                    index._doc_terms.setdefault(doc_id, {})[head] = tf
                index.postings[head] = postings
            else:
                raise Corrupt(f"index: line {lineno}: unrecognized line {line[:40]!r}")
        if declared_n is None:
            raise Corrupt("index: truncated before stats line")
        if declared_n != index.doc_count:
            raise Corrupt(f"index: N={declared_n} but {index.doc_count} doc lines")
        if declared_tt != index.total_tokens:
            raise Corrupt(f"index: TT={declared_tt} but doc lines sum to {index.total_tokens}")
        for doc_id in index.doc_stats:
            digest = self.latest_content_hash(doc_id)
            if digest is not None:
                index.set_content_hash(doc_id, digest)
        return index

    # --- users ------------------------------------------------------------------

    def _load_users(self):
        self.users: dict[str, User] = {}
        for rec in self._read_jsonl("users.jsonl", repair=True):
            self.users[rec["username"]] = User(
                username=rec["username"],
                password_digest=bytes.fromhex(rec["password_digest"]),
                salt=bytes.fromhex(rec["salt"]),
                is_admin=rec.get("is_admin", False),
            )

    def save_users(self) -> None:
        self._require_writer()
        lines = []
        for name in sorted(self.users):
            u = self.users[name]
            lines.append(json.dumps({
                "username": u.username,
                "password_digest": u.password_digest.hex(),
                "salt": u.salt.hex(),
                "is_admin": u.is_admin,
            }, separators=(",", ":"), sort_keys=True))
        try:
            atomic_write_text(self.root / "users.jsonl", "".join(l + "\n" for l in lines))
        except OSError as exc:
            raise _wrap_os_error(exc) from exc

    # --- protkut ------------------------------------------------------------------

    def _load_communities(self):
        self.communities: dict[str, Community] = {}
        for rec in self._read_jsonl("communities.jsonl", repair=True):
            self.communities[rec["name"]] = Community(
                name=rec["name"],
                description=rec["description"],
                created_by=rec["created_by"],
                members=set(rec["members"]),
            )

    def save_communities(self) -> None:
        self._require_writer()
        lines = []
        for name in sorted(self.communities):
            c = self.communities[name]
            lines.append(json.dumps({
                "name": c.name,
                "description": c.description,
                "created_by": c.created_by,
                "members": sorted(c.members),
            }, separators=(",", ":"), sort_keys=True))
        try:
            atomic_write_text(self.root / "communities.jsonl", "".join(l + "\n" for l in lines))
        except OSError as exc:
            raise _wrap_os_error(exc) from exc

    def _load_scraps(self):
        self.scraps: list[Scrap] = []
        for rec in self._read_jsonl("scraps.jsonl", repair=True):
            target = rec["target"]
            kind, name = ("user", target["user"]) if "user" in target else ("community", target["community"])
            self.scraps.append(Scrap(
                id=rec["id"],
                from_user=rec["from_user"],
                target_kind=kind,
                target_name=name,
                body=rec["body"],
                created_at=rec["created_at"],
            ))
        self.next_scrap_id = max((s.id for s in self.scraps), default=0) + 1

    def append_scrap(self, scrap: Scrap) -> None:
        self._require_writer()
        self._append_jsonl("scraps.jsonl", {
            "id": scrap.id,
            "from_user": scrap.from_user,
            "target": {scrap.target_kind: scrap.target_name},
            "body": scrap.body,
            "created_at": scrap.created_at,
        })
        self.scraps.append(scrap)
        self.next_scrap_id = scrap.id + 1


def open_store(root, read_only: bool = False) -> Store:
    """Open (creating if needed) the store at root.

    Writer opens take the exclusive lock and raise Locked if another writer
    is alive; read-only opens skip the lock and see the last published state.
    """
    return Store(root, read_only=read_only)
