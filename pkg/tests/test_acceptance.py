"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
"""

import functools
import json
import random
import threading
import time
import unicodedata
from pathlib import Path

import pytest
import requests

from conftest import load_corpus, load_queries, make_doc
from oracle import brute_force_rank
from viruspkt import auth, errors
from viruspkt import store as store_mod
from viruspkt.cli import main as cli_main
from viruspkt.config import AppConfig
from viruspkt.fetcher import RawDocument, refresh_all, SourceSpec
from viruspkt.indexer import DEFAULT_PARAMS, Index, add_document, build_index
from viruspkt.normalizer import convert, normalize_text
from viruspkt.search import parse_query, rank, run_query
from viruspkt.service import App, make_server
from viruspkt.store import open_store

FIXTURES = Path(__file__).parent / "fixtures"


def criterion(number, name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"\n[acceptance] criterion {number} ({name}): FAIL")
                raise
            print(f"\n[acceptance] criterion {number} ({name}): PASS")
        return wrapper
    return decorate


# --- shared corpus environment -------------------------------------------------

@pytest.fixture(scope="module")
def corpus_store(tmp_path_factory):
    """The frozen 30-doc corpus persisted into a store, plus one user."""
    root = tmp_path_factory.mktemp("acceptance") / "data"
    docs = load_corpus()
    with open_store(root) as store:
        for doc in docs:
            store.put_document(doc)
        index = build_index(docs)
        store.persist_index(index)
        auth.add_user(store, "alice", "acceptance-pw", is_admin=True)
    return root, docs


# --- criterion 1: ranking oracle equivalence ---------------------------------------

@criterion(1, "ranking oracle equivalence")
def test_ranking_oracle_equivalence():
    docs = load_corpus()
    queries = load_queries()
    assert len(docs) == 30 and len(queries) == 50
    index = build_index(docs)

    started = time.monotonic()
    for raw_query in queries:
        query = parse_query(raw_query)
        indexed = rank(index, DEFAULT_PARAMS, query)
        expected = brute_force_rank(docs, query.terms, query.category_filter)
        assert [d for d, _ in indexed] == [d for d, _ in expected], raw_query
        # scores agree bit-for-bit as well (same formula, same fold order)
        assert indexed == expected, raw_query
    elapsed = time.monotonic() - started
    assert elapsed < 5.0, f"oracle comparison took {elapsed:.2f}s"


# --- criterion 2: conversion golden corpus ------------------------------------------

@criterion(2, "conversion golden corpus")
def test_conversion_golden_corpus():
    cases = json.loads((FIXTURES / "convert" / "cases.json").read_text())
    golden_cases = [c for c in cases if "golden" in c]
    assert len(golden_cases) >= 20

    for case in cases:
        body = (FIXTURES / "convert" / f"{case['name']}.input").read_bytes()
        raw = RawDocument(doc_id="0" * 16, source_url="https://fixture.example/x",
                          fetched_at=1, content_type=case["hint"], body=body)
        if "error" in case:
            with pytest.raises(getattr(errors, case["error"])):
                convert(raw)
            continue
        golden = (FIXTURES / "convert" / case["golden"]).read_bytes()
        assert convert(raw).text.encode("utf-8") == golden, case["name"]

    rng = random.Random(20260808)
    pool = ("abc XYZ 019 \t\r\néé   ﬁ"
            " ́あ\U0001F600. -")
    for _ in range(1000):
        text = "".join(rng.choice(pool) for _ in range(rng.randrange(0, 120)))
        once = normalize_text(text)
        assert normalize_text(once) == once
        assert unicodedata.is_normalized("NFC", once)


# --- criterion 3: dedup (exact and near) -----------------------------------------------

@criterion(3, "duplicate suppression")
def test_dedup_exact_and_near(tmp_path, http_fixture):
    # exact: one body served under two URLs -> indexed:1, skipped:1
    body = b"identical corpus entry about influenza"
    base = http_fixture({"/u1": (200, "text/plain", body),
                         "/u2": (200, "text/plain", body)})
    specs = [SourceSpec(name="one", url=f"{base}/u1", category="general"),
             SourceSpec(name="two", url=f"{base}/u2", category="general")]
    with open_store(tmp_path / "exact") as store:
        report = refresh_all(specs, store, Index(), now=1700000000)
    assert report.indexed == 1
    assert report.skipped_duplicates == 1

    # near: the frozen pair within Hamming distance 3 collapses to one result
    near_a = make_doc((FIXTURES / "simhash_near_a.txt").read_text(),
                      url="https://h/near-a", fetched_at=200)
    near_b = make_doc((FIXTURES / "simhash_near_b.txt").read_text(),
                      url="https://h/near-b", fetched_at=100)
    from viruspkt.indexer import hamming_distance
    assert 1 <= hamming_distance(near_a.simhash, near_b.simhash) <= 3
    index = build_index([near_a, near_b])
    docs = {d.doc_id: d for d in (near_a, near_b)}
    results, total = run_query(index, DEFAULT_PARAMS, parse_query("virus"),
                               docs.__getitem__)
    assert total == 1
    assert results[0].doc_id == near_a.doc_id
    assert results[0].duplicates == [near_b.doc_id]

    # far: a pair beyond the threshold stays two results
    far_a = make_doc((FIXTURES / "simhash_far_a.txt").read_text(),
                     url="https://h/far-a", fetched_at=200)
    far_b = make_doc((FIXTURES / "simhash_far_b.txt").read_text(),
                     url="https://h/far-b", fetched_at=100)
    assert hamming_distance(far_a.simhash, far_b.simhash) > 3
    index = build_index([far_a, far_b])
    docs = {d.doc_id: d for d in (far_a, far_b)}
    results, total = run_query(index, DEFAULT_PARAMS, parse_query("virus"),
                               docs.__getitem__)
    assert total == 2
    assert all(r.duplicates == [] for r in results)


# --- criterion 4: persistence round trip + crash injection --------------------------------

@criterion(4, "persistence round trip and crash safety")
def test_persistence_round_trip_and_crashes(corpus_store, tmp_path, monkeypatch):
    root, docs = corpus_store
    built = build_index(docs)
    reader = open_store(root, read_only=True)
    loaded = reader.load_index()
    for raw_query in load_queries():
        query = parse_query(raw_query)
        assert rank(loaded, DEFAULT_PARAMS, query) == rank(built, DEFAULT_PARAMS, query), raw_query

    class Crash(RuntimeError):
        pass

    def boom(*args, **kwargs):
        raise Crash("injected")

    passes = 0
    for trial in range(100):
        mode = trial % 4
        trial_root = tmp_path / f"trial{trial:03d}"
        old_doc = make_doc(f"stable document {trial}\n", url=f"https://h/base{trial}")
        new_doc = make_doc(f"incoming change {trial}\n", url=f"https://h/base{trial}")
        with open_store(trial_root) as store:
            store.put_document(old_doc)
            store.persist_index(build_index([old_doc]))

        with open_store(trial_root) as store:
            try:
                if mode == 0:
                    # crash between temp write and rename of the doc file
                    monkeypatch.setattr(store_mod, "replace_file", boom)
                    store.put_document(new_doc)
                elif mode == 1:
                    # doc file published, crash before the manifest append
                    monkeypatch.setattr(store_mod.Store, "_append_jsonl", boom)
                    store.put_document(new_doc)
                elif mode == 2:
                    # full put, then the manifest append is torn mid-line
                    store.put_document(new_doc)
                    manifest = trial_root / "manifest.jsonl"
                    data = manifest.read_bytes()
                    manifest.write_bytes(data[:-9])
                else:
                    # crash between temp write and rename of the index file
                    index = build_index([old_doc, new_doc])
                    monkeypatch.setattr(store_mod, "replace_file", boom)
                    store.persist_index(index)
            except Crash:
                pass
            finally:
                monkeypatch.undo()

        # the store must reopen, with either the old or the new state
        with open_store(trial_root) as store:
            revisions = [r["revision"] for r in store.manifest
                         if r["doc_id"] == old_doc.doc_id]
            assert revisions in ([1], [1, 2]), f"trial {trial}: mixed state {revisions}"
            assert store.get_document(old_doc.doc_id, revision=1).text == old_doc.text
            if revisions == [1, 2]:
                assert store.get_document(old_doc.doc_id).text == new_doc.text
            recovered = store.load_index()
            assert recovered.doc_count in (1, 2)
        passes += 1
    assert passes == 100


# --- criterion 5: end-to-end refresh and search ---------------------------------------------

FLU_HTML = (b"<html><body><h1>Influenza outbreak bulletin</h1>"
            b"<p>The influenza virus spreads in winter. Capsid proteins studied.</p>"
            b"</body></html>")
HOSTS_CSV = b"pathogen,host\nrabies,bats\nmeasles,humans\n"


@criterion(5, "end-to-end refresh and search")
def test_end_to_end_refresh_and_search(tmp_path, http_fixture, capsys):
    base = http_fixture({
        "/site/flu.html": (200, "text/html", FLU_HTML),
        "/data/hosts.csv": (200, "text/csv", HOSTS_CSV),
        # /missing is not routed: the fixture server answers 404
    })
    sources = tmp_path / "sources.json"
    sources.write_text(json.dumps([
        {"name": "flu-site", "url": f"{base}/site/flu.html", "category": "general"},
        {"name": "hosts-table", "url": f"{base}/data/hosts.csv", "category": "general"},
        {"name": "dead-link", "url": f"{base}/missing", "category": "general"},
    ]))
    data = str(tmp_path / "data")

    assert cli_main(["refresh", "--sources", str(sources), "--data", data]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["fetched"] == 2
    assert report["converted"] == 2
    assert report["indexed"] == 2
    assert report["skipped_duplicates"] == 0
    assert len(report["failed"]) == 1
    assert report["failed"][0]["source"] == "dead-link"

    from viruspkt.fetcher import assign_doc_id
    html_id = assign_doc_id(f"{base}/site/flu.html")
    csv_id = assign_doc_id(f"{base}/data/hosts.csv")
    scripted = [
        ("influenza", html_id),
        ("rabies", csv_id),
        ("capsid winter", html_id),
        ("measles humans", csv_id),
        ("pathogen host", csv_id),
    ]
    for raw_query, expected_top in scripted:
        assert cli_main(["search", raw_query, "--data", data, "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["results"], raw_query
        assert payload["results"][0]["doc_id"] == expected_top, raw_query


# --- criterion 6: sessions ------------------------------------------------------------------

PROTECTED = [
    ("GET", "/api/search?q=virus"),
    ("GET", "/api/doc/" + "0" * 16),
    ("POST", "/api/refresh"),
    ("GET", "/api/communities"),
    ("POST", "/api/communities"),
    ("POST", "/api/communities/board/join"),
    ("GET", "/api/scraps?user=alice"),
    ("POST", "/api/scraps"),
]


@criterion(6, "session expiry, auth wall, cache-buster invariance")
def test_sessions(corpus_store):
    root, docs = corpus_store

    # exact boundary behavior, unit level
    table = auth.SessionTable()
    session = table.create("alice", now=1000, idle_ttl_seconds=1800)
    assert auth.validate_session(table, session.token, now=1000 + 1799) == "alice"
    # the preceding call slid the window forward
    assert auth.validate_session(table, session.token, now=1000 + 1799 + 1799) == "alice"
    with pytest.raises(errors.SessionExpired):
        auth.validate_session(table, session.token, now=1000 + 1799 + 1799 + 1801)
    with pytest.raises(errors.NotAuthenticated):
        auth.validate_session(table, "ab" * 16, now=0)

    clock_now = {"value": 2_000_000.0}
    store = open_store(root, read_only=True)
    index = store.load_index()
    app = App(AppConfig(data_dir=root, idle_ttl_seconds=1800), store, index,
              clock=lambda: clock_now["value"])
    server = make_server(app, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_port}"
    try:
        # the auth wall: every protected endpoint answers 401 + redirect
        for method, path in PROTECTED:
            resp = requests.request(method, f"{base}{path}", json={})
            assert resp.status_code == 401, (method, path)
            assert resp.json() == {"error": "login_required", "redirect": "/"}, (method, path)

        token = requests.post(f"{base}/api/login", json={
            "username": "alice", "password": "acceptance-pw"}).json()["token"]
        headers = {"Authorization": f"Bearer {token}"}

        # responses are byte-identical regardless of _cb
        plain = requests.get(f"{base}/api/search?q=virus", headers=headers)
        busted = requests.get(f"{base}/api/search?q=virus&_cb=99887766", headers=headers)
        assert plain.status_code == busted.status_code == 200
        assert plain.content == busted.content

        # sliding expiry at the endpoint level
        clock_now["value"] += 1799
        assert requests.get(f"{base}/api/search?q=virus", headers=headers).status_code == 200
        clock_now["value"] += 1799
        assert requests.get(f"{base}/api/search?q=virus", headers=headers).status_code == 200
        clock_now["value"] += 1801
        expired = requests.get(f"{base}/api/search?q=virus", headers=headers)
        assert expired.status_code == 401
        assert expired.json() == {"error": "login_required", "redirect": "/"}
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)


# --- criterion 7: CLI/API parity ----------------------------------------------------------------

@criterion(7, "CLI and API parity")
def test_cli_api_parity(corpus_store, capsys):
    root, docs = corpus_store
    store = open_store(root, read_only=True)
    index = store.load_index()
    app = App(AppConfig(data_dir=root), store, index)
    server = make_server(app, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_port}"
    try:
        token = requests.post(f"{base}/api/login", json={
            "username": "alice", "password": "acceptance-pw"}).json()["token"]
        headers = {"Authorization": f"Bearer {token}"}
        for raw_query in load_queries():
            api = requests.get(f"{base}/api/search", params={"q": raw_query},
                               headers=headers).json()
            assert cli_main(["search", raw_query, "--data", str(root), "--json"]) == 0
            cli_payload = json.loads(capsys.readouterr().out)
            assert cli_payload == api, raw_query
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)
