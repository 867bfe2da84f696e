import json
import secrets

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import redirect_chain, sleepy_response
from viruspkt import errors
from viruspkt.fetcher import (
    RefreshReport,
    SourceSpec,
    assign_doc_id,
    cache_busted_url,
    canonicalize_url,
    fetch_source,
    load_source_config,
    refresh_all,
)
from viruspkt.indexer import Index
from viruspkt.store import open_store


# --- canonicalize_url ----------------------------------------------------------

def test_canonicalize_spec_cases():
    assert canonicalize_url("HTTP://Ex.Org:80/A?x=1#f") == "http://ex.org/A?x=1"
    assert canonicalize_url("https://h/p?_cb=123&q=v") == "https://h/p?q=v"
    assert canonicalize_url("https://h/p") == "https://h/p"


def test_canonicalize_keeps_non_default_port_and_param_order():
    assert canonicalize_url("https://h:8443/p?b=2&a=1") == "https://h:8443/p?b=2&a=1"
    assert canonicalize_url("https://h:443/p") == "https://h/p"


def test_canonicalize_preserves_trailing_slash():
    assert canonicalize_url("https://h/p/") == "https://h/p/"
    assert canonicalize_url("https://h") == "https://h"


def test_canonicalize_cb_variants():
    assert canonicalize_url("https://h/p?_cb=1") == "https://h/p"
    assert canonicalize_url("https://h/p?_cb") == "https://h/p"
    assert canonicalize_url("https://h/p?x_cb=1&_cbx=2") == "https://h/p?x_cb=1&_cbx=2"


def test_canonicalize_rejects_bad_urls():
    for bad in ("ftp://x", "not a url", "//missing-scheme", "http://"):
        with pytest.raises(errors.InvalidUrl):
            canonicalize_url(bad)


# --- assign_doc_id -----------------------------------------------------------------

def test_doc_id_pinned_values():
    # digests computed with an independent SHA-256 tool
    assert assign_doc_id("https://example.org/v") == "8deda3af28fd0de0"
    assert assign_doc_id("https://h/a") == "616e3352b314cc4b"
    assert assign_doc_id("https://h/b") == "41025f17e03264c8"


def test_doc_id_deterministic():
    assert assign_doc_id("https://h/x") == assign_doc_id("https://h/x")


@settings(max_examples=200)
@given(
    host=st.text(alphabet="abcdefgh", min_size=1, max_size=8),
    path=st.text(alphabet="abcdefgh/", max_size=12),
    cb=st.integers(min_value=0, max_value=2 ** 64 - 1),
    fragment=st.text(alphabet="abcxyz", max_size=6),
)
def test_doc_id_invariant_under_cb_and_fragment(host, path, cb, fragment):
    base = f"https://{host}/{path}"
    noisy = cache_busted_url(base, cb) + (f"#{fragment}" if fragment else "")
    assert assign_doc_id(noisy) == assign_doc_id(base)


# --- cache_busted_url -----------------------------------------------------------------

def test_cache_buster_spec_cases():
    assert cache_busted_url("http://h/p", 7) == "http://h/p?_cb=7"
    assert cache_busted_url("http://h/p?q=x", 7) == "http://h/p?q=x&_cb=7"


def test_cache_buster_invalid_url():
    with pytest.raises(errors.InvalidUrl):
        cache_busted_url("ftp://h/p", 7)


def test_cache_buster_draws_distinct():
    urls = {cache_busted_url("http://h/p", secrets.randbits(64)) for _ in range(1000)}
    assert len(urls) == 1000


# --- load_source_config ------------------------------------------------------------------

def write_sources(tmp_path, entries):
    path = tmp_path / "sources.json"
    path.write_text(json.dumps(entries), encoding="utf-8")
    return path


def test_load_source_config_defaults(tmp_path):
    path = write_sources(tmp_path, [
        {"name": "pdb-mirror", "url": "https://example.org/v", "category": "structure"},
    ])
    specs = load_source_config(path)
    assert len(specs) == 1
    spec = specs[0]
    assert spec.name == "pdb-mirror"
    assert spec.format_hint is None
    assert spec.enabled is True


def test_load_source_config_duplicate_name(tmp_path):
    path = write_sources(tmp_path, [
        {"name": "a", "url": "https://h/1", "category": "general"},
        {"name": "a", "url": "https://h/2", "category": "general"},
    ])
    with pytest.raises(errors.DuplicateSourceName):
        load_source_config(path)


def test_load_source_config_bad_scheme(tmp_path):
    path = write_sources(tmp_path, [{"name": "a", "url": "ftp://x", "category": "general"}])
    with pytest.raises(errors.InvalidUrl):
        load_source_config(path)


def test_load_source_config_parse_error_has_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('[\n{"name": "a",}\n]', encoding="utf-8")
    with pytest.raises(errors.MalformedConfig) as exc:
        load_source_config(path)
    assert "line 2" in str(exc.value)


def test_load_source_config_disabled_included(tmp_path):
    path = write_sources(tmp_path, [
        {"name": "off", "url": "https://h/x", "category": "general", "enabled": False},
    ])
    specs = load_source_config(path)
    assert specs[0].enabled is False


def test_load_source_config_unknown_key(tmp_path):
    path = write_sources(tmp_path, [
        {"name": "a", "url": "https://h/x", "category": "general", "extra": 1},
    ])
    with pytest.raises(errors.MalformedConfig):
        load_source_config(path)


# --- fetch_source -------------------------------------------------------------------------

def spec_for(base, path="/doc", name="src"):
    return SourceSpec(name=name, url=f"{base}{path}", category="general")


def test_fetch_round_trip(http_fixture):
    base = http_fixture({"/doc": (200, "text/plain", b"hello")})
    raw = fetch_source(spec_for(base), now=1700000000)
    assert raw.body == b"hello"
    assert raw.content_type == "text/plain"
    assert raw.fetched_at == 1700000000
    assert raw.revision == 1
    assert raw.doc_id == assign_doc_id(f"{base}/doc")


def test_fetch_sends_user_agent(http_fixture):
    seen = {}

    def record(handler):
        seen["ua"] = handler.headers.get("User-Agent")
        handler.send_response(200)
        handler.send_header("Content-Length", "2")
        handler.end_headers()
        handler.wfile.write(b"ok")

    base = http_fixture({"/doc": record})
    fetch_source(spec_for(base))
    assert seen["ua"] == "viruspkt/1.0"


def test_fetch_404_raises(http_fixture):
    base = http_fixture({"/doc": (404, "text/plain", b"gone")})
    with pytest.raises(errors.HttpError) as exc:
        fetch_source(spec_for(base))
    assert exc.value.status == 404


def test_fetch_too_large(http_fixture):
    cap = 1024
    base = http_fixture({"/doc": (200, "text/plain", b"x" * (cap + 1))})
    with pytest.raises(errors.TooLarge):
        fetch_source(spec_for(base), body_cap=cap)


def test_fetch_exactly_at_cap_ok(http_fixture):
    cap = 1024
    base = http_fixture({"/doc": (200, "text/plain", b"x" * cap)})
    assert len(fetch_source(spec_for(base), body_cap=cap).body) == cap


def test_fetch_follows_up_to_five_redirects(http_fixture):
    base = http_fixture(redirect_chain("hop", 5))
    raw = fetch_source(spec_for(base, "/hop/0"))
    assert raw.body == b"arrived"


def test_fetch_six_redirects_fails(http_fixture):
    base = http_fixture(redirect_chain("hop", 6))
    with pytest.raises(errors.TooManyRedirects):
        fetch_source(spec_for(base, "/hop/0"))


def test_fetch_timeout(http_fixture):
    base = http_fixture({"/doc": sleepy_response(1.0)})
    with pytest.raises(errors.Timeout):
        fetch_source(spec_for(base), timeout=0.2)


def test_fetch_connection_refused():
    spec = SourceSpec(name="dead", url="http://127.0.0.1:1/doc", category="general")
    with pytest.raises(errors.NetworkError):
        fetch_source(spec, timeout=0.5)


def test_fetch_missing_content_type(http_fixture):
    base = http_fixture({"/doc": (200, "", b"data")})
    assert fetch_source(spec_for(base)).content_type == ""


# --- refresh_all ----------------------------------------------------------------------------

def fresh_env(tmp_path):
    store = open_store(tmp_path / "data")
    return store, Index()


def test_refresh_two_new_sources(http_fixture, tmp_path):
    base = http_fixture({
        "/a": (200, "text/html", b"<p>alpha influenza notes</p>"),
        "/b": (200, "text/csv", b"h5n1,study\nflu,report\n"),
    })
    specs = [spec_for(base, "/a", "src-a"), spec_for(base, "/b", "src-b")]
    store, index = fresh_env(tmp_path)
    with store:
        report = refresh_all(specs, store, index, now=1700000000)
    assert report.to_dict() == {
        "fetched": 2, "converted": 2, "indexed": 2,
        "skipped_duplicates": 0, "failed": [],
    }


def test_refresh_identical_bodies_dedup(http_fixture, tmp_path):
    body = b"same exact body text"
    base = http_fixture({
        "/a": (200, "text/plain", body),
        "/b": (200, "text/plain", body),
    })
    specs = [spec_for(base, "/a", "src-a"), spec_for(base, "/b", "src-b")]
    store, index = fresh_env(tmp_path)
    with store:
        report = refresh_all(specs, store, index, now=1700000000)
    assert report.indexed == 1
    assert report.skipped_duplicates == 1


def test_refresh_500_reported_as_failure(http_fixture, tmp_path):
    base = http_fixture({"/a": (500, "text/plain", b"boom")})
    store, index = fresh_env(tmp_path)
    with store:
        report = refresh_all([spec_for(base, "/a", "broken")], store, index)
    assert report.fetched == 0
    assert len(report.failed) == 1
    assert report.failed[0][0] == "broken"


def test_refresh_conversion_failure_counted(http_fixture, tmp_path):
    base = http_fixture({"/a": (200, "", bytes([0xFF, 0xFE, 0x00]))})
    store, index = fresh_env(tmp_path)
    with store:
        report = refresh_all([spec_for(base, "/a", "binary")], store, index)
    assert report.fetched == 1
    assert report.converted == 0
    assert report.failed[0][0] == "binary"
    # invariant: fetched = converted + conversion failures
    assert report.fetched == report.converted + 1


def test_refresh_disabled_sources_skipped(http_fixture, tmp_path):
    base = http_fixture({"/a": (200, "text/plain", b"content")})
    spec = spec_for(base, "/a", "off")
    spec.enabled = False
    store, index = fresh_env(tmp_path)
    with store:
        report = refresh_all([spec], store, index)
    assert report.to_dict()["fetched"] == 0
    assert report.failed == []


def test_refresh_idempotent_on_unchanged_sources(http_fixture, tmp_path):
    base = http_fixture({
        "/a": (200, "text/plain", b"first body here"),
        "/b": (200, "text/plain", b"second body here"),
    })
    specs = [spec_for(base, "/a", "src-a"), spec_for(base, "/b", "src-b")]
    store, index = fresh_env(tmp_path)
    with store:
        first = refresh_all(specs, store, index, now=1700000000)
        second = refresh_all(specs, store, index, now=1700000400)
    assert first.indexed == 2
    assert second.indexed == 0
    assert second.skipped_duplicates == first.indexed


def test_refresh_changed_content_makes_new_revision(http_fixture, tmp_path):
    state = {"payload": b"version one"}

    def serve(handler):
        body = state["payload"]
        handler.send_response(200)
        handler.send_header("Content-Type", "text/plain")
        handler.send_header("Content-Length", str(len(body)))
        handler.end_headers()
        handler.wfile.write(body)

    base = http_fixture({"/a": serve})
    spec = spec_for(base, "/a", "src-a")
    store, index = fresh_env(tmp_path)
    with store:
        refresh_all([spec], store, index, now=1700000000)
        state["payload"] = b"version two"
        report = refresh_all([spec], store, index, now=1700000600)
        doc_id = assign_doc_id(spec.url)
        assert report.indexed == 1
        assert store.get_document(doc_id).revision == 2
        assert store.get_document(doc_id, revision=1).text == "version one\n"


def test_refresh_report_invariants(http_fixture, tmp_path):
    base = http_fixture({
        "/ok": (200, "text/plain", b"fine"),
        "/bad": (503, "text/plain", b"nope"),
        "/bin": (200, "", bytes([0xFF, 0xFE, 0x00])),
    })
    specs = [spec_for(base, "/ok", "ok"), spec_for(base, "/bad", "bad"),
             spec_for(base, "/bin", "bin")]
    store, index = fresh_env(tmp_path)
    with store:
        report = refresh_all(specs, store, index)
    conversion_failures = report.fetched - report.converted
    assert conversion_failures == 1
    assert report.indexed + report.skipped_duplicates == report.converted
    assert len(report.failed) == 2


def test_refresh_fetches_hosts_concurrently(tmp_path, http_fixture):
    import time as _time

    delay = 0.4
    bases = [http_fixture({"/slow": sleepy_response(delay, b"payload %d" % i)})
             for i in range(4)]
    specs = [spec_for(base, "/slow", f"host-{i}") for i, base in enumerate(bases)]
    store, index = fresh_env(tmp_path)
    started = _time.monotonic()
    with store:
        report = refresh_all(specs, store, index, max_parallel=4)
    elapsed = _time.monotonic() - started
    assert report.fetched == 4
    # four distinct hosts in parallel: far below the 1.6s serial floor
    assert elapsed < 3 * delay, f"took {elapsed:.2f}s"


def test_refresh_serializes_same_host(tmp_path, http_fixture):
    import time as _time

    delay = 0.3
    seen = []

    def tracked(handler):
        seen.append(("start", _time.monotonic()))
        _time.sleep(delay)
        seen.append(("end", _time.monotonic()))
        handler.send_response(200)
        handler.send_header("Content-Length", "2")
        handler.end_headers()
        handler.wfile.write(b"ok")

    base = http_fixture({"/one": tracked, "/two": tracked})
    specs = [spec_for(base, "/one", "same-1"), spec_for(base, "/two", "same-2")]
    store, index = fresh_env(tmp_path)
    with store:
        report = refresh_all(specs, store, index, max_parallel=4)
    assert report.fetched == 2
    # requests to one host never overlap
    events = sorted(seen, key=lambda e: e[1])
    assert [kind for kind, _ in events] == ["start", "end", "start", "end"]
