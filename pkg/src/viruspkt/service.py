"""Session-authenticated HTTP JSON API plus static UI hosting.

Every endpoint except POST /api/login and the static routes requires a valid
session, presented as `Authorization: Bearer <token>` or a `session` cookie.
Authentication failures answer 401 with {"error":"login_required",
"redirect":"/"}; the browser client performs the redirect. The `_cb`
cache-buster query parameter is accepted and ignored everywhere.

Search requests read whichever index snapshot is current; a refresh builds
its own copy and publishes it atomically when done, so in-flight queries
finish on the old snapshot.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from http.cookies import SimpleCookie
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Optional
from urllib.parse import parse_qsl, unquote, urlsplit

from . import auth, protkut
from .config import AppConfig
from .errors import (
    BodyTooLong,
    DescriptionTooLong,
    DuplicateName,
    EmptyBody,
    EmptyQuery,
    InvalidCredentials,
    InvalidName,
    NotAMember,
    NotAuthenticated,
    NotFound,
    SessionExpired,
    StoreUnavailable,
    TargetNotFound,
    UnknownCategory,
    VirusPktError,
)
from .fetcher import load_source_config, refresh_all
from .indexer import CATEGORIES, Index
from .search import MAX_LIMIT, SearchResult, parse_query, run_query
from .store import Store

logger = logging.getLogger(__name__)

_STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}

_PLACEHOLDER_HOME = b"""<!DOCTYPE html>
<html><head><title>viruspkt</title></head>
<body><h1>viruspkt</h1>
<p>The service is running. No browser UI is installed; use the JSON API
under /api/ or point webui_dir at a built frontend.</p></body></html>
"""


class Response:
    def __init__(self, status: int, body: bytes = b"",
                 content_type: str = "application/json",
                 headers: Optional[list[tuple[str, str]]] = None):
        self.status = status
        self.body = body
        self.content_type = content_type
        self.headers = headers or []


def json_response(status: int, payload, headers=None) -> Response:
    body = (json.dumps(payload) + "\n").encode("utf-8")
    return Response(status, body, "application/json", headers)


def error_response(status: int, code: str, message: str = "") -> Response:
    payload = {"error": code}
    if message:
        payload["message"] = message
    return json_response(status, payload)


def login_required_response() -> Response:
    return json_response(401, {"error": "login_required", "redirect": "/"})


_ERROR_CODES = {
    EmptyQuery: "empty_query",
    UnknownCategory: "unknown_category",
    InvalidName: "invalid_name",
    DuplicateName: "duplicate_name",
    DescriptionTooLong: "description_too_long",
    EmptyBody: "empty_body",
    BodyTooLong: "body_too_long",
}


def _error_code(exc: Exception) -> str:
    return _ERROR_CODES.get(type(exc), "bad_request")


def results_payload(results: list[SearchResult], total: int) -> dict:
    """The /api/search response body; the CLI --json output matches it."""
    return {"total": total, "results": [r.to_dict() for r in results]}


class App:
    """Route table and handlers, separable from the socket server."""

    def __init__(self, config: AppConfig, store: Store, index: Index,
                 clock: Callable[[], float] = time.time):
        self.config = config
        self.store = store
        self.index = index
        self.clock = clock
        self.sessions = auth.SessionTable()
        self._refresh_mutex = threading.Lock()

    # --- request entry point ------------------------------------------------

    def handle(self, method: str, target: str, headers: dict[str, str],
               body: bytes) -> Response:
        parts = urlsplit(target)
        path = unquote(parts.path)
        params: dict[str, str] = {}
        for key, value in parse_qsl(parts.query, keep_blank_values=True):
            params.setdefault(key, value)
        params.pop("_cb", None)  # cache-buster: accepted and ignored
        try:
            return self._route(method, path, params, headers, body)
        except (NotAuthenticated, SessionExpired):
            return login_required_response()
        except (EmptyQuery, UnknownCategory, InvalidName, DuplicateName,
                DescriptionTooLong, EmptyBody, BodyTooLong) as exc:
            return error_response(400, _error_code(exc), str(exc))
        except InvalidCredentials:
            return error_response(401, "invalid_credentials")
        except NotAMember as exc:
            return error_response(403, "not_a_member", str(exc))
        except (NotFound, TargetNotFound) as exc:
            return error_response(404, "not_found", str(exc))
        except StoreUnavailable as exc:
            return error_response(500, "store_unavailable", str(exc))
        except VirusPktError as exc:
            logger.exception("request failed")
            return error_response(500, "internal_error", str(exc))

    def _route(self, method, path, params, headers, body) -> Response:
        if path == "/api/login" and method == "POST":
            return self._login(body)
        if path == "/api/search" and method == "GET":
            return self._search(params, headers)
        match = re.fullmatch(r"/api/doc/([0-9a-f]{16})", path)
        if match and method == "GET":
            return self._doc(match.group(1), params, headers)
        if path == "/api/refresh" and method == "POST":
            return self._refresh(headers)
        if path == "/api/communities" and method == "GET":
            return self._list_communities(headers)
        if path == "/api/communities" and method == "POST":
            return self._create_community(headers, body)
        match = re.fullmatch(r"/api/communities/([^/]+)/join", path)
        if match and method == "POST":
            return self._join_community(headers, match.group(1))
        if path == "/api/scraps" and method == "POST":
            return self._post_scrap(headers, body)
        if path == "/api/scraps" and method == "GET":
            return self._list_scraps(headers, params)
        if method == "GET" and (path == "/" or path.startswith("/assets/")):
            return self._static(path)
        return error_response(404, "not_found", f"no route {method} {path}")

    # --- auth helpers ---------------------------------------------------------

    def _authenticate(self, headers: dict[str, str]) -> str:
        token = ""
        authorization = headers.get("authorization", "")
        if authorization.lower().startswith("bearer "):
            token = authorization[7:].strip()
        elif headers.get("cookie"):
            cookie = SimpleCookie()
            cookie.load(headers["cookie"])
            if "session" in cookie:
                token = cookie["session"].value
        if not token:
            raise NotAuthenticated("no session token presented")
        return auth.validate_session(self.sessions, token, self.clock())

    @staticmethod
    def _json_body(body: bytes) -> dict:
        try:
            data = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise EmptyBody(f"request body is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise EmptyBody("request body must be a JSON object")
        return data

    # --- endpoints ----------------------------------------------------------------

    def _login(self, body: bytes) -> Response:
        data = self._json_body(body)
        username = str(data.get("username", ""))
        password = str(data.get("password", ""))
        session = auth.login(self.store, self.sessions, username, password,
                             self.clock(), self.config.idle_ttl_seconds)
        cookie = f"session={session.token}; Path=/; HttpOnly"
        return json_response(
            200,
            {"token": session.token, "expires_in_seconds": session.idle_ttl_seconds},
            headers=[("Set-Cookie", cookie)],
        )

    def _search(self, params: dict[str, str], headers) -> Response:
        self._authenticate(headers)
        raw_limit = params.get("limit", "")
        limit = 10
        if raw_limit:
            try:
                limit = int(raw_limit)
            except ValueError:
                return error_response(400, "invalid_limit", f"limit {raw_limit!r} is not an integer")
            if limit < 1:
                return error_response(400, "invalid_limit", "limit must be >= 1")
            limit = min(limit, MAX_LIMIT)
        query = parse_query(params.get("q", ""), limit=limit, params=self.config.params)
        category = params.get("category")
        if category:
            category = category.lower()
            if category not in CATEGORIES:
                raise UnknownCategory(f"unknown category {category!r}")
            query.category_filter = category
        snapshot = self.index
        results, total = run_query(snapshot, self.config.params, query,
                                   self.store.get_document)
        return json_response(200, results_payload(results, total))

    def _doc(self, doc_id: str, params: dict[str, str], headers) -> Response:
        self._authenticate(headers)
        revision = None
        if params.get("revision"):
            try:
                revision = int(params["revision"])
            except ValueError:
                return error_response(400, "invalid_revision",
                                      f"revision {params['revision']!r} is not an integer")
        doc = self.store.get_document(doc_id, revision)
        return Response(200, doc.text.encode("utf-8"), "text/plain; charset=utf-8")

    def _refresh(self, headers) -> Response:
        username = self._authenticate(headers)
        user = self.store.users.get(username)
        if user is None or not user.is_admin:
            return error_response(403, "admin_required", "refresh needs an admin session")
        if self.config.sources_file is None:
            return error_response(400, "no_sources", "no sources_file configured")
        specs = load_source_config(self.config.sources_file)
        with self._refresh_mutex:
            staging = self.index.copy()
            report = refresh_all(
                specs, self.store, staging,
                now=self.clock(),
                adapters=self.config.adapters,
                lexicon=self.config.lexicon,
                params=self.config.params,
            )
            self.index = staging  # atomic snapshot publish
        return json_response(200, report.to_dict())

    def _list_communities(self, headers) -> Response:
        self._authenticate(headers)
        out = []
        for name in sorted(self.store.communities):
            c = self.store.communities[name]
            out.append({
                "name": c.name,
                "description": c.description,
                "created_by": c.created_by,
                "members": sorted(c.members),
            })
        return json_response(200, {"communities": out})

    def _create_community(self, headers, body: bytes) -> Response:
        username = self._authenticate(headers)
        data = self._json_body(body)
        community = protkut.create_community(
            self.store, str(data.get("name", "")), str(data.get("description", "")), username)
        return json_response(201, {
            "name": community.name,
            "description": community.description,
            "created_by": community.created_by,
            "members": sorted(community.members),
        })

    def _join_community(self, headers, name: str) -> Response:
        username = self._authenticate(headers)
        protkut.join_community(self.store, name, username)
        return json_response(200, {"name": name, "joined": True})

    def _post_scrap(self, headers, body: bytes) -> Response:
        username = self._authenticate(headers)
        data = self._json_body(body)
        if ("to_user" in data) == ("to_community" in data):
            return error_response(400, "bad_target",
                                  "exactly one of to_user or to_community is required")
        if "to_user" in data:
            kind, name = "user", str(data["to_user"])
        else:
            kind, name = "community", str(data["to_community"])
        scrap = protkut.post_scrap(self.store, username, kind, name,
                                   str(data.get("body", "")), self.clock())
        return json_response(201, scrap.to_dict())

    def _list_scraps(self, headers, params: dict[str, str]) -> Response:
        self._authenticate(headers)
        if ("user" in params) == ("community" in params):
            return error_response(400, "bad_target",
                                  "exactly one of user or community is required")
        kind, name = ("user", params["user"]) if "user" in params else ("community", params["community"])
        scraps = protkut.list_scraps(self.store, kind, name)
        return json_response(200, {"scraps": [s.to_dict() for s in scraps]})

    # --- static UI ------------------------------------------------------------------

    def _static(self, path: str) -> Response:
        root = self.config.webui_dir
        if root is None:
            if path == "/":
                return Response(200, _PLACEHOLDER_HOME, "text/html; charset=utf-8")
            return error_response(404, "not_found", "no UI installed")
        rel = "index.html" if path == "/" else path.lstrip("/")
        root = root.resolve()
        target = (root / rel).resolve()
        if not target.is_relative_to(root) or not target.is_file():
            return error_response(404, "not_found", path)
        content_type = _STATIC_TYPES.get(target.suffix, "application/octet-stream")
        return Response(200, target.read_bytes(), content_type)


class _Handler(BaseHTTPRequestHandler):
    app: App = None  # set by make_server

    def _dispatch(self):
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        headers = {k.lower(): v for k, v in self.headers.items()}
        try:
            response = self.app.handle(self.command, self.path, headers, body)
        except Exception:
            logger.exception("unhandled error for %s %s", self.command, self.path)
            response = error_response(500, "internal_error")
        self.send_response(response.status)
        self.send_header("Content-Type", response.content_type)
        self.send_header("Content-Length", str(len(response.body)))
        for key, value in response.headers:
            self.send_header(key, value)
        self.end_headers()
        self.wfile.write(response.body)

    do_GET = _dispatch
    do_POST = _dispatch

    def log_message(self, fmt, *args):
        logger.debug("%s %s", self.address_string(), fmt % args)


def make_server(app: App, host: str = "127.0.0.1", port: Optional[int] = None) -> ThreadingHTTPServer:
    """Build the HTTP server (unstarted); port=None uses the config's port."""
    handler = type("BoundHandler", (_Handler,), {"app": app})
    return ThreadingHTTPServer((host, port if port is not None else app.config.port), handler)


def serve_forever(app: App, host: str = "127.0.0.1") -> None:
    """Run the service, with the periodic refresh loop when configured."""
    server = make_server(app, host)
    interval = app.config.refresh_interval_seconds
    if interval > 0 and app.config.sources_file is not None:
        def refresher():
            while True:
                time.sleep(interval)
                try:
                    specs = load_source_config(app.config.sources_file)
                    with app._refresh_mutex:
                        staging = app.index.copy()
                        refresh_all(specs, app.store, staging, now=app.clock(),
                                    adapters=app.config.adapters,
                                    lexicon=app.config.lexicon,
                                    params=app.config.params)
                        app.index = staging
                except Exception:
                    logger.exception("periodic refresh failed")

        threading.Thread(target=refresher, daemon=True, name="viruspkt-refresh").start()
    logger.info("serving on %s:%d", host, server.server_port)
    try:
        server.serve_forever()
    finally:
        server.server_close()
