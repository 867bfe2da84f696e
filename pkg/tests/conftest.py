import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlsplit

import pytest

from viruspkt import indexer
from viruspkt.fetcher import assign_doc_id, canonicalize_url
from viruspkt.normalizer import NormalizedDocument, normalize_text

FIXTURES = Path(__file__).parent / "fixtures"


def make_doc(text: str, url: str = "https://fixture.example/doc",
             fetched_at: int = 1700000000, category: str = "general",
             revision: int = 1) -> NormalizedDocument:
    """Build a NormalizedDocument the way the conversion pipeline would."""
    text = normalize_text(text)
    terms = indexer.tokenize(text)
    title = next((line for line in text.split("\n") if line.strip()), "")[:120]
    return NormalizedDocument(
        doc_id=assign_doc_id(url),
        revision=revision,
        title=title,
        text=text,
        category=category,
        content_hash=indexer.content_hash(text),
        simhash=indexer.simhash(terms),
        token_count=len(terms),
        source_url=canonicalize_url(url),
        fetched_at=fetched_at,
    )


@pytest.fixture
def doc_factory():
    return make_doc


def load_corpus() -> list[NormalizedDocument]:
    """The frozen 30-document ranking corpus."""
    meta = json.loads((FIXTURES / "corpus" / "meta.json").read_text())
    docs = []
    for name in sorted(meta):
        text = (FIXTURES / "corpus" / f"{name}.txt").read_text(encoding="utf-8")
        info = meta[name]
        docs.append(make_doc(text, url=info["url"], fetched_at=info["fetched_at"],
                             category=info["category"]))
    return docs


def load_queries() -> list[str]:
    return (FIXTURES / "queries.txt").read_text(encoding="utf-8").splitlines()


@pytest.fixture(scope="session")
def corpus_docs():
    return load_corpus()


@pytest.fixture(scope="session")
def suite_queries():
    return load_queries()


class FixtureHandler(BaseHTTPRequestHandler):
    """Serves canned responses from a routes dict set on the subclass.

    Route values: (status, content_type, body_bytes) tuples, or a callable
    taking the handler for full control (redirect chains, slow responses).
    """

    routes: dict = {}

    def do_GET(self):
        path = urlsplit(self.path).path
        entry = self.routes.get(path)
        if entry is None:
            self.send_response(404)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        if callable(entry):
            entry(self)
            return
        status, content_type, body = entry
        self.send_response(status)
        if content_type:
            self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_fixture():
    """Factory: start a local HTTP server for given routes, yield its base URL."""
    servers = []

    def start(routes: dict) -> str:
        handler = type("Routes", (FixtureHandler,), {"routes": routes})
        server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        servers.append((server, thread))
        return f"http://127.0.0.1:{server.server_port}"

    yield start
    for server, thread in servers:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)


def sleepy_response(delay: float, body: bytes = b"slow"):
    def handle(handler):
        time.sleep(delay)
        handler.send_response(200)
        handler.send_header("Content-Length", str(len(body)))
        handler.end_headers()
        handler.wfile.write(body)
    return handle


def redirect_chain(prefix: str, hops: int, final_body: bytes = b"arrived"):
    """Routes for /<prefix>/0 -> ... -> /<prefix>/<hops> -> 200."""
    routes = {}
    for i in range(hops):
        def bounce(handler, nxt=f"/{prefix}/{i + 1}"):
            handler.send_response(302)
            handler.send_header("Location", nxt)
            handler.send_header("Content-Length", "0")
            handler.end_headers()
        routes[f"/{prefix}/{i}"] = bounce
    routes[f"/{prefix}/{hops}"] = (200, "text/plain", final_body)
    return routes
