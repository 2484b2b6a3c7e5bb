"""Search backends the agents call as tools.

Every backend answers ``search(query, limit)`` with a list of
:class:`BackendResult` and raises :class:`BackendError` on failure. The
same request/response shape is served over HTTP by :func:`serve_backend`
and consumed by :class:`HttpBackend`::

    POST /search  {"query": str, "limit": int}
    200           {"results": [{"url": str, "title": str, "payload": {...}}]}
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import date
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .index import FacetConstraints, Index


class BackendError(RuntimeError):
    pass


@dataclass(frozen=True)
class BackendResult:
    url: str
    title: str
    payload: Mapping = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"url": self.url, "title": self.title, "payload": dict(self.payload)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BackendResult":
        if not isinstance(d.get("url"), str) or not d["url"]:
            raise BackendError(f"result without url: {d!r}")
        return cls(d["url"], str(d.get("title") or ""), dict(d.get("payload") or {}))


class SearchBackend(Protocol):
    backend_id: str

    def search(self, query: str, limit: int) -> list[BackendResult]: ...


class FixtureBackend:
    """Canned results keyed by issued query (case-insensitive, whitespace-normalized).

    The JSON fixture format is ``{"<query>": [{"url", "title", "payload"}...]}``;
    a ``"*"`` key supplies results for any other query.
    """

    def __init__(self, results: Mapping[str, Sequence[BackendResult | Mapping]], backend_id: str = "fixture",
                 fail: bool = False):
        self.backend_id = backend_id
        self.fail = fail
        self.calls: list[str] = []
        self._results = {}
        for q, rows in results.items():
            self._results[self._key(q)] = [
                r if isinstance(r, BackendResult) else BackendResult.from_dict(r) for r in rows
            ]

    @staticmethod
    def _key(q: str) -> str:
        return " ".join(q.lower().split())

    @classmethod
    def from_file(cls, path: str | Path, backend_id: str | None = None) -> "FixtureBackend":
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        return cls(data, backend_id or f"fixture:{path.stem}")

    def search(self, query: str, limit: int) -> list[BackendResult]:
        self.calls.append(query)
        if self.fail:
            raise BackendError(f"{self.backend_id} unavailable")
        rows = self._results.get(self._key(query), self._results.get("*", []))
        return list(rows[:limit])


class IndexBackend:
    """The local dataset-metadata index exposed as a search tool."""

    def __init__(self, index: Index, facets: FacetConstraints | None = None, backend_id: str = "metadata-index"):
        self.index = index
        self.facets = facets
        self.backend_id = backend_id

    def search(self, query: str, limit: int) -> list[BackendResult]:
        if not query.strip():
            return []
        out = []
        for hit in self.index.search(query, self.facets, limit):
            rec = hit.record
            payload = rec.to_dict()
            payload["score"] = hit.score
            out.append(BackendResult(rec.landing_url, rec.name, payload))
        return out

    def search_datasets(self, keywords: str, last_updated: int | None = None, license: str | None = None,
                        data_type: str | None = None, reference_date: date | None = None,
                        limit: int = 10) -> list[BackendResult]:
        """Faceted tool call: keywords plus recency, license class and data type."""
        if reference_date is None:
            if self.facets is None:
                raise ValueError("reference_date is required for faceted search")
            reference_date = self.facets.reference_date
        facets = FacetConstraints(reference_date, license, data_type, last_updated)
        return [
            BackendResult(h.record.landing_url, h.record.name, {**h.record.to_dict(), "score": h.score})
            for h in self.index.search(keywords, facets, limit)
        ]


class HttpBackend:
    def __init__(self, endpoint: str, backend_id: str | None = None, client: httpx.Client | None = None,
                 timeout: float = 30.0):
        self.endpoint = endpoint
        self.backend_id = backend_id or f"http:{endpoint}"
        self._client = client or httpx.Client(timeout=timeout)

    def search(self, query: str, limit: int) -> list[BackendResult]:
        try:
            resp = self._client.post(self.endpoint, json={"query": query, "limit": limit})
            resp.raise_for_status()
            data = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise BackendError(f"{self.backend_id}: {exc}") from exc
        rows = data.get("results") if isinstance(data, dict) else None
        if not isinstance(rows, list):
            raise BackendError(f"{self.backend_id}: response lacks a results array")
        return [BackendResult.from_dict(r) for r in rows][:limit]


def _handler_for(backend: SearchBackend) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        def _reply(self, code: int, body: dict) -> None:
            data = json.dumps(body).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):  # noqa: N802
            if self.path.rstrip("/") != "/search":
                self._reply(404, {"error": "not found"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                req = json.loads(self.rfile.read(length) or b"{}")
                query, limit = req["query"], int(req.get("limit", 10))
                if not isinstance(query, str) or limit < 1:
                    raise ValueError
            except (ValueError, KeyError, TypeError):
                self._reply(400, {"error": "expected {query: str, limit: int >= 1}"})
                return
            try:
                results = backend.search(query, limit)
            except BackendError as exc:
                self._reply(502, {"error": str(exc)})
                return
            self._reply(200, {"results": [r.to_dict() for r in results]})

        def log_message(self, format, *args):  # silence default stderr logging
            pass

    return Handler


def serve_backend(backend: SearchBackend, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Start serving ``backend`` on a daemon thread; call ``shutdown()`` when done."""
    server = ThreadingHTTPServer((host, port), _handler_for(backend))
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


def backend_from_spec(spec: str, index_loader: Callable[[str], Index] | None = None,
                      facets: FacetConstraints | None = None) -> SearchBackend:
    """Build a backend from ``fixture:<file>``, ``index:<dir or ndjson>`` or an http(s) URL."""
    kind, _, arg = spec.partition(":")
    if kind in ("http", "https"):
        return HttpBackend(spec)
    if kind == "fixture":
        return FixtureBackend.from_file(arg)
    if kind == "index":
        if index_loader is None:
            raise ValueError("index backend needs an index loader")
        return IndexBackend(index_loader(arg), facets)
    raise ValueError(f"unknown backend spec {spec!r}")
