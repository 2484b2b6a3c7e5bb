"""Page fetching and the write-once, content-addressed snapshot store.

Fetch failures are data, never exceptions: a definitive HTTP error is
``unreachable``; timeouts, TLS problems, redirect loops and serializer
crashes are ``undetermined`` and go to human review.

Store layout::

    <root>/<sha256>.md      frozen Markdown, one file per distinct content
    <root>/manifest.json    url -> {id, fetched_at, status, http_status, reason}
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping
from urllib.parse import urlsplit
from urllib.robotparser import RobotFileParser

import httpx

from .markdown import normalize_markdown, raw_to_markdown, serialize_markdown

log = logging.getLogger(__name__)

DESKTOP_USER_AGENT = (
    "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) "
    "Chrome/124.0 Safari/537.36"
)
OK, UNREACHABLE, UNDETERMINED = "ok", "unreachable", "undetermined"
_RAW_TYPES = ("text/csv", "text/tab-separated-values", "application/json", "application/xml",
              "text/xml", "application/rdf+xml", "text/turtle", "application/ld+json",
              "application/geo+json")


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class FetchPolicy:
    timeout: float = 20.0
    redirect_limit: int = 5
    user_agent: str = DESKTOP_USER_AGENT
    respect_robots: bool = True


@dataclass(frozen=True)
class FetchOutcome:
    url: str
    status: str
    fetched_at: str
    http_status: int | None = None
    reason: str | None = None
    body: str | None = None
    content_type: str = ""
    final_url: str | None = None

    def __post_init__(self):
        if self.status == OK and self.body is None:
            raise ValueError("ok outcome requires a body")
        if self.status not in (OK, UNREACHABLE, UNDETERMINED):
            raise ValueError(f"bad fetch status {self.status!r}")


class _Robots:
    def __init__(self):
        self._cache: dict[str, RobotFileParser | None] = {}
        self._lock = threading.Lock()

    def allowed(self, client: httpx.Client, url: str, agent: str) -> bool:
        parts = urlsplit(url)
        origin = f"{parts.scheme}://{parts.netloc}"
        with self._lock:
            if origin not in self._cache:
                parser: RobotFileParser | None = None
                try:
                    resp = client.get(origin + "/robots.txt")
                    if resp.status_code == 200:
                        parser = RobotFileParser()
                        parser.parse(resp.text.splitlines())
                except httpx.HTTPError:
                    parser = None  # unreachable robots.txt means no restrictions
                self._cache[origin] = parser
            parser = self._cache[origin]
        return parser is None or parser.can_fetch(agent, url)


def fetch(
    url: str,
    policy: FetchPolicy = FetchPolicy(),
    client: httpx.Client | None = None,
    clock: Callable[[], str] = utc_now,
    robots: _Robots | None = None,
) -> FetchOutcome:
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.netloc:
        return FetchOutcome(url, UNDETERMINED, clock(), reason="invalid_url")
    own = client is None
    if client is None:
        client = httpx.Client()
    try:
        robots = robots or _Robots()
        if policy.respect_robots and not robots.allowed(client, url, policy.user_agent):
            return FetchOutcome(url, UNDETERMINED, clock(), reason="robots_disallowed")
        resp = client.get(
            url,
            headers={"User-Agent": policy.user_agent},
            timeout=policy.timeout,
            follow_redirects=False,
        )
        hops = 0
        while resp.is_redirect:
            if hops >= policy.redirect_limit:
                return FetchOutcome(url, UNDETERMINED, clock(), http_status=resp.status_code,
                                    reason="too_many_redirects")
            target = resp.next_request
            if target is None:
                break
            hops += 1
            resp = client.send(target, follow_redirects=False)
    except httpx.TimeoutException:
        return FetchOutcome(url, UNDETERMINED, clock(), reason="timeout")
    except httpx.ConnectError as exc:
        reason = "tls_error" if "SSL" in str(exc) or "certificate" in str(exc).lower() else "connect_error"
        return FetchOutcome(url, UNDETERMINED, clock(), reason=reason)
    except httpx.HTTPError as exc:
        return FetchOutcome(url, UNDETERMINED, clock(), reason=type(exc).__name__)
    finally:
        if own:
            client.close()
    code = resp.status_code
    ctype = resp.headers.get("content-type", "")
    final = str(resp.url)
    if code >= 400:
        # the body is kept so blocker heuristics (login walls) can inspect it
        return FetchOutcome(url, UNREACHABLE, clock(), http_status=code, body=resp.text,
                            content_type=ctype, final_url=final)
    if code >= 300 or code < 200:
        return FetchOutcome(url, UNDETERMINED, clock(), http_status=code,
                            reason=f"unexpected_status_{code}")
    try:
        body = resp.text
    except Exception:  # undecodable payload
        return FetchOutcome(url, UNDETERMINED, clock(), http_status=code, reason="decode_error")
    return FetchOutcome(url, OK, clock(), http_status=code, body=body, content_type=ctype,
                        final_url=final)


def fetch_all(
    urls: Iterable[str],
    policy: FetchPolicy = FetchPolicy(),
    client: httpx.Client | None = None,
    concurrency: int = 8,
    per_host_delay: float = 0.0,
    clock: Callable[[], str] = utc_now,
) -> list[FetchOutcome]:
    """Fetch ``urls`` in parallel; results come back in input order."""
    urls = list(urls)
    last_hit: dict[str, float] = {}
    host_locks: dict[str, threading.Lock] = {}
    guard = threading.Lock()
    shared = client or httpx.Client()
    robots = _Robots()

    def one(url: str) -> FetchOutcome:
        host = urlsplit(url).netloc
        with guard:
            lock = host_locks.setdefault(host, threading.Lock())
        with lock:
            if per_host_delay > 0:
                wait = last_hit.get(host, 0.0) + per_host_delay - time.monotonic()
                if wait > 0:
                    time.sleep(wait)
            try:
                return fetch(url, policy, shared, clock, robots)
            finally:
                last_hit[host] = time.monotonic()

    try:
        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            return list(pool.map(one, urls))
    finally:
        if client is None:
            shared.close()


def page_markdown(outcome: FetchOutcome) -> FetchOutcome | str:
    """Markdown for an ok outcome, or an undetermined outcome if serialization fails."""
    assert outcome.status == OK and outcome.body is not None
    ctype = outcome.content_type.split(";")[0].strip().lower()
    try:
        if ctype in _RAW_TYPES:
            return raw_to_markdown(outcome.body, ctype)
        return serialize_markdown(outcome.body, outcome.final_url or outcome.url)
    except Exception:
        log.exception("markdown serialization failed for %s", outcome.url)
        return FetchOutcome(outcome.url, UNDETERMINED, outcome.fetched_at,
                            http_status=outcome.http_status, reason="serialize_failure")


def content_id(markdown: str) -> str:
    return hashlib.sha256(normalize_markdown(markdown).encode("utf-8")).hexdigest()


class SnapshotNotFound(KeyError):
    pass


@dataclass(frozen=True)
class Snapshot:
    snapshot_id: str
    url: str
    markdown: str
    fetched_at: str


class SnapshotStore:
    """Write-once Markdown store keyed by SHA-256 of the normalized text."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._manifest_path = self.root / "manifest.json"
        self.manifest: dict[str, dict] = {}
        if self._manifest_path.exists():
            self.manifest = json.loads(self._manifest_path.read_text(encoding="utf-8"))

    def _write_atomic(self, path: Path, data: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _save_manifest(self) -> None:
        data = json.dumps(self.manifest, indent=1, sort_keys=True) + "\n"
        self._write_atomic(self._manifest_path, data.encode("utf-8"))

    def freeze(self, url: str, markdown: str, fetched_at: str | None = None) -> str:
        text = normalize_markdown(markdown)
        if not text:
            raise ValueError(f"refusing to freeze empty markdown for {url}")
        sid = hashlib.sha256(text.encode("utf-8")).hexdigest()
        path = self.root / f"{sid}.md"
        with self._lock:
            if not path.exists():
                self._write_atomic(path, text.encode("utf-8"))
            entry = self.manifest.get(url)
            if entry is None or entry.get("id") != sid:
                self.manifest[url] = {
                    "id": sid,
                    "fetched_at": fetched_at or utc_now(),
                    "status": OK,
                    "http_status": 200,
                    "reason": None,
                }
                self._save_manifest()
        return sid

    def record_failure(self, outcome: FetchOutcome) -> None:
        with self._lock:
            self.manifest[outcome.url] = {
                "id": None,
                "fetched_at": outcome.fetched_at,
                "status": outcome.status,
                "http_status": outcome.http_status,
                "reason": outcome.reason,
            }
            self._save_manifest()

    def read(self, snapshot_id: str) -> Snapshot:
        path = self.root / f"{snapshot_id}.md"
        if len(snapshot_id) != 64 or not path.exists():
            raise SnapshotNotFound(snapshot_id)
        markdown = path.read_bytes().decode("utf-8")
        url, fetched = "", ""
        for u in sorted(self.manifest):
            if self.manifest[u].get("id") == snapshot_id:
                url, fetched = u, self.manifest[u]["fetched_at"]
                break
        return Snapshot(snapshot_id, url, markdown, fetched)

    def lookup(self, url: str) -> dict | None:
        return self.manifest.get(url)


def freeze_outcome(store: SnapshotStore, outcome: FetchOutcome) -> FetchOutcome | str:
    """Serialize and freeze an outcome; returns the snapshot id or the failure outcome."""
    if outcome.status != OK:
        store.record_failure(outcome)
        return outcome
    md = page_markdown(outcome)
    if isinstance(md, FetchOutcome):
        store.record_failure(md)
        return md
    if not md.strip():
        md = "(empty page)\n"
    return store.freeze(outcome.url, md, outcome.fetched_at)


class FixtureTransport(httpx.BaseTransport):
    """Serve pages from a directory instead of the network.

    ``pages`` maps URL -> ``{"file": relative path, "status": int,
    "content_type": str, "location": str}``; unknown URLs get a 404.
    A status of 0 simulates a timeout.
    """

    def __init__(self, pages: Mapping[str, dict], root: str | Path):
        self.pages = dict(pages)
        self.root = Path(root)

    @classmethod
    def from_manifest(cls, path: str | Path) -> "FixtureTransport":
        path = Path(path)
        return cls(json.loads(path.read_text(encoding="utf-8")), path.parent)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        url = str(request.url)
        spec = self.pages.get(url)
        if spec is None:
            if request.url.path == "/robots.txt":
                return httpx.Response(404, request=request)
            return httpx.Response(404, text="<h1>Not Found</h1>", request=request)
        status = spec.get("status", 200)
        if status == 0:
            raise httpx.ReadTimeout("simulated timeout", request=request)
        headers = {"content-type": spec.get("content_type", "text/html; charset=utf-8")}
        if "location" in spec:
            headers["location"] = spec["location"]
        content = b""
        if spec.get("file"):
            content = (self.root / spec["file"]).read_bytes()
        return httpx.Response(status, headers=headers, content=content, request=request)
