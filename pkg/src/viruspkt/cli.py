"""Operator command line: fetch, convert, index, refresh, search, serve, user.

`refresh` is the one-shot maintainer run (fetch + convert + index); the three
stages stay individually invokable for debugging, with raw bodies staged
under <data>/raw/ between fetch and convert. Exit codes: 0 success, 1
operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import getpass
import json
import os
import sys
import time
from pathlib import Path

from . import auth
from .config import load_config
from .errors import VirusPktError
from .fetcher import fetch_source, load_source_config, refresh_all
from .indexer import DEFAULT_PARAMS, Index, add_document, build_index
from .normalizer import NO_ADAPTERS, convert
from .search import parse_query, run_query
from .service import App, results_payload, serve_forever
from .store import Store, open_store

PASSWORD_ENV = "VIRUSPKT_PASSWORD"


def _raw_dir(data_dir: Path) -> Path:
    return data_dir / "raw"


def cmd_fetch(args) -> int:
    specs = load_source_config(args.sources)
    raw_dir = _raw_dir(Path(args.data))
    raw_dir.mkdir(parents=True, exist_ok=True)
    now = time.time()
    failures = 0
    for spec in specs:
        if not spec.enabled:
            continue
        try:
            raw = fetch_source(spec, now)
        except VirusPktError as exc:
            failures += 1
            print(f"fetch {spec.name}: {exc}", file=sys.stderr)
            continue
        (raw_dir / f"{raw.doc_id}.bin").write_bytes(raw.body)
        (raw_dir / f"{raw.doc_id}.json").write_text(json.dumps({
            "source_name": spec.name,
            "source_url": raw.source_url,
            "fetched_at": raw.fetched_at,
            "content_type": raw.content_type,
            "format_hint": spec.format_hint,
            "category": spec.category,
        }, indent=2) + "\n", encoding="utf-8")
        print(f"fetched {spec.name} -> {raw.doc_id} ({len(raw.body)} bytes)")
    print(f"staged {len(list(raw_dir.glob('*.bin')))} raw bodies, {failures} failures")
    return 0


def cmd_convert(args) -> int:
    from .fetcher import RawDocument

    raw_dir = _raw_dir(Path(args.data))
    with open_store(args.data) as store:
        converted = skipped = failures = 0
        for meta_path in sorted(raw_dir.glob("*.json")):
            doc_id = meta_path.stem
            body_path = raw_dir / f"{doc_id}.bin"
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            raw = RawDocument(
                doc_id=doc_id,
                source_url=meta["source_url"],
                fetched_at=meta["fetched_at"],
                content_type=meta["content_type"] or meta.get("format_hint") or "",
                body=body_path.read_bytes(),
            )
            try:
                doc = convert(raw, NO_ADAPTERS, source_default=meta.get("category", "general"))
            except VirusPktError as exc:
                failures += 1
                print(f"convert {doc_id}: {exc}", file=sys.stderr)
                continue
            if store.latest_content_hash(doc_id) == doc.content_hash:
                skipped += 1
            else:
                revision = store.put_document(doc)
                converted += 1
                print(f"converted {doc_id} -> r{revision}")
            if not args.keep_raw:
                body_path.unlink(missing_ok=True)
                meta_path.unlink(missing_ok=True)
        print(f"converted {converted}, unchanged {skipped}, failures {failures}")
    return 0


def cmd_index(args) -> int:
    with open_store(args.data) as store:
        index = Index()
        for doc_id in store.doc_ids():
            add_document(index, store.get_document(doc_id))
        store.persist_index(index)
        print(f"indexed {index.doc_count} documents, {len(index.postings)} terms")
    return 0


def cmd_refresh(args) -> int:
    specs = load_source_config(args.sources)
    with open_store(args.data) as store:
        try:
            index = store.load_index()
        except VirusPktError:
            index = Index()
        report = refresh_all(specs, store, index)
        print(json.dumps(report.to_dict()))
    return 0


def cmd_search(args) -> int:
    if not 1 <= args.limit <= 100:
        print("--limit must be within 1..100", file=sys.stderr)
        return 2
    with open_store(args.data, read_only=True) as store:
        index = store.load_index()
        query = parse_query(args.query, limit=args.limit)
        if args.category:
            from .errors import UnknownCategory
            from .indexer import CATEGORIES

            category = args.category.lower()
            if category not in CATEGORIES:
                raise UnknownCategory(f"unknown category {category!r}")
            query.category_filter = category
        results, total = run_query(index, DEFAULT_PARAMS, query, store.get_document)
    if args.json:
        print(json.dumps(results_payload(results, total)))
        return 0
    if not results:
        print("no results")
        return 0
    for pos, result in enumerate(results, start=1):
        extra = f" (+{len(result.duplicates)} duplicates)" if result.duplicates else ""
        print(f"{pos}. [{result.score:.4f}] {result.title}{extra}")
        print(f"   {result.doc_id}  {result.category}  {result.source_url}")
        print(f"   {result.snippet}")
    return 0


def cmd_serve(args) -> int:
    config = load_config(args.config)
    with open_store(config.data_dir) as store:
        try:
            index = store.load_index()
        except VirusPktError:
            index = Index()
        app = App(config, store, index)
        serve_forever(app)
    return 0


def _read_password() -> str:
    password = os.environ.get(PASSWORD_ENV)
    if password:
        return password
    return getpass.getpass("password: ")


def cmd_user(args) -> int:
    with open_store(args.data) as store:
        if args.action == "add":
            auth.add_user(store, args.name, _read_password(), is_admin=args.admin)
            print(f"added user {args.name}" + (" (admin)" if args.admin else ""))
        elif args.action == "passwd":
            auth.set_password(store, args.name, _read_password())
            print(f"password updated for {args.name}")
        else:
            auth.remove_user(store, args.name)
            print(f"removed user {args.name}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viruspkt",
                                     description="document ingestion and search service")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="fetch sources into the raw staging area")
    p.add_argument("--sources", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(fn=cmd_fetch)

    p = sub.add_parser("convert", help="convert staged raw bodies into the store")
    p.add_argument("--data", required=True)
    p.add_argument("--keep-raw", action="store_true")
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("index", help="rebuild the index from stored documents")
    p.add_argument("--data", required=True)
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("refresh", help="fetch + convert + index in one run")
    p.add_argument("--sources", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(fn=cmd_refresh)

    p = sub.add_parser("search", help="query the index")
    p.add_argument("query")
    p.add_argument("--data", required=True)
    p.add_argument("--category")
    p.add_argument("--limit", type=int, default=10)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("user", help="manage users")
    p.add_argument("action", choices=["add", "passwd", "rm"])
    p.add_argument("name")
    p.add_argument("--admin", action="store_true")
    p.add_argument("--data", required=True)
    p.set_defaults(fn=cmd_user)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except VirusPktError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
