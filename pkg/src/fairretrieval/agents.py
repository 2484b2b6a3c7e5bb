"""Baseline and semantic retrieval agents under shared controls.

Both strategies share the same controls: at most ``max_results``
datasets, temperature 0, output as a JSON array of ``{"name", "url"}``,
the exact fallback sentence when nothing is found, and a hard
grounding filter so every returned URL appeared in that query's tool
results.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Iterable, Sequence

from .backends import BackendError, BackendResult, SearchBackend
from .lexicon import STOPWORDS
from .queries import Query

log = logging.getLogger(__name__)

SENTINEL = "No relevant datasets found."
BASELINE, SEMANTIC = "baseline", "semantic"
ANSWERED, FALLBACK, ERRORED = "answered", "fallback", "errored"


@dataclass(frozen=True)
class AgentConfig:
    strategy: str
    max_results: int = 3
    temperature: float = 0.0
    fallback_sentinel: str = SENTINEL
    expansion_tokens: tuple[str, ...] = ("dataset",)
    candidate_limit: int = 10  # results requested from the search tool

    def __post_init__(self):
        if self.strategy not in (BASELINE, SEMANTIC):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.max_results < 1:
            raise ValueError("max_results must be >= 1")
        if self.fallback_sentinel != SENTINEL:
            raise ValueError("the fallback sentinel is fixed")
        object.__setattr__(self, "expansion_tokens", tuple(self.expansion_tokens))


@dataclass(frozen=True)
class Retrieval:
    query_id: str
    dataset_name: str
    url: str
    rank: int
    strategy: str

    def to_dict(self) -> dict:
        return {"query_id": self.query_id, "strategy": self.strategy, "rank": self.rank,
                "dataset_name": self.dataset_name, "url": self.url}

    @classmethod
    def from_dict(cls, d: dict) -> "Retrieval":
        return cls(d["query_id"], d["dataset_name"], d["url"], int(d["rank"]), d["strategy"])


@dataclass(frozen=True)
class ToolLog:
    query_id: str
    issued_query: str
    backend_id: str
    results: tuple[BackendResult, ...]
    timestamp: str

    def urls(self) -> set[str]:
        return {r.url for r in self.results}

    def to_dict(self) -> dict:
        return {"query_id": self.query_id, "issued_query": self.issued_query, "backend_id": self.backend_id,
                "timestamp": self.timestamp, "results": [r.to_dict() for r in self.results]}

    @classmethod
    def from_dict(cls, d: dict) -> "ToolLog":
        return cls(d["query_id"], d["issued_query"], d["backend_id"],
                   tuple(BackendResult.from_dict(r) for r in d["results"]), d["timestamp"])


@dataclass
class AgentRun:
    query_id: str
    strategy: str
    status: str
    retrievals: list[Retrieval]
    tool_log: ToolLog | None
    events: list[str] = field(default_factory=list)
    error: str | None = None

    def response(self) -> str:
        """The wire response: a JSON array, or the bare fallback sentence."""
        if self.status != ANSWERED:
            return SENTINEL
        return json.dumps([{"name": r.dataset_name, "url": r.url} for r in self.retrievals], ensure_ascii=False)

    def to_dict(self) -> dict:
        return {"query_id": self.query_id, "strategy": self.strategy, "status": self.status,
                "response": self.response(), "retrievals": [r.to_dict() for r in self.retrievals],
                "events": list(self.events), "error": self.error}


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _words(text: str) -> list[str]:
    return [w.strip(".,;:!?\"'()[]").lower() for w in text.split()]


def plan_query(strategy: str, user_query: str, llm=None, config: AgentConfig | None = None,
               events: list[str] | None = None, stopwords: frozenset = STOPWORDS) -> str:
    """Turn the user's query into the string issued to the search tool."""
    if not user_query or not user_query.strip():
        raise ValueError("user query must be non-empty")
    text = " ".join(user_query.split())
    if strategy == BASELINE:
        tokens = (config or AgentConfig(BASELINE)).expansion_tokens
        present = set(_words(text))
        extra = []
        for tok in tokens:
            if tok.lower() not in present:
                extra.append(tok)
                present.add(tok.lower())
        return " ".join([text] + extra)
    if strategy != SEMANTIC:
        raise ValueError(f"unknown strategy {strategy!r}")
    kept = [w for w, norm in zip(text.split(), _words(text)) if norm and norm not in stopwords]
    deterministic = " ".join(kept) if kept else text
    if llm is None:
        return deterministic
    prompt = (
        "Extract the core search keywords from this dataset request. Keep the user's own words, "
        "drop filler, and answer with the keywords only.\n\nRequest: " + text
    )
    try:
        rewrite = " ".join(llm.complete(prompt, temperature=0.0).split())
    except Exception as exc:
        _note(events, f"llm rewrite failed: {exc}")
        return deterministic
    if rewrite and set(_words(rewrite)) & set(_words(text)):
        return rewrite
    _note(events, f"llm rewrite {rewrite!r} shares no token with the query; using {deterministic!r}")
    return deterministic


def _note(events: list[str] | None, message: str) -> None:
    log.warning(message)
    if events is not None:
        events.append(message)


def _llm_select(llm, query: str, results: Sequence[BackendResult], max_results: int) -> list[tuple[str, str]]:
    listing = "\n".join(
        f"- title: {r.title}\n  url: {r.url}\n  details: {json.dumps(dict(r.payload), ensure_ascii=False)[:500]}"
        for r in results
    )
    prompt = (
        f"User request: {query}\n\nSearch results:\n{listing}\n\n"
        f"Return at most {max_results} highly relevant datasets, using only URLs listed above, as a JSON "
        f'array of objects {{"name": ..., "url": ...}}. If none fit, answer exactly: {SENTINEL}'
    )
    text = llm.complete(prompt, temperature=0.0).strip()
    if text == SENTINEL:
        return []
    start, end = text.find("["), text.rfind("]")
    data = json.loads(text[start : end + 1] if start >= 0 and end > start else text)
    if not isinstance(data, list):
        raise ValueError("selection is not a JSON array")
    out = []
    for item in data:
        if isinstance(item, dict) and isinstance(item.get("url"), str):
            out.append((str(item.get("name") or ""), item["url"]))
    return out


def run_agent(config: AgentConfig, query: Query, backend: SearchBackend, llm=None,
              clock: Callable[[], str] = utc_timestamp) -> AgentRun:
    events: list[str] = []
    issued = plan_query(config.strategy, query.text, llm if config.strategy == SEMANTIC else None,
                        config, events)
    try:
        results = backend.search(issued, config.candidate_limit)
    except BackendError as exc:
        return AgentRun(query.id, config.strategy, ERRORED, [], None, events, str(exc))
    except Exception as exc:  # a broken backend is an errored run, never a crash
        log.exception("backend %s failed", getattr(backend, "backend_id", "?"))
        return AgentRun(query.id, config.strategy, ERRORED, [], None, events, f"{type(exc).__name__}: {exc}")
    tool_log = ToolLog(query.id, issued, backend.backend_id, tuple(results), clock())

    candidates: list[tuple[str, str]]
    if llm is not None and results:
        try:
            candidates = _llm_select(llm, query.text, results, config.max_results)
        except Exception as exc:
            _note(events, f"llm selection unusable ({exc}); using tool order")
            candidates = [(r.title, r.url) for r in results]
    else:
        candidates = [(r.title, r.url) for r in results]

    titles = {r.url: r.title for r in results}
    grounded = tool_log.urls()
    kept: list[Retrieval] = []
    seen: set[str] = set()
    for name, url in candidates:
        if url not in grounded:
            _note(events, f"grounding violation: {url} not in tool results")
            continue
        if url in seen:
            continue  # duplicates collapse onto their best (first) rank
        seen.add(url)
        kept.append(Retrieval(query.id, name or titles.get(url, "") or url, url, len(kept) + 1, config.strategy))
        if len(kept) == config.max_results:
            break
    status = ANSWERED if kept else FALLBACK
    return AgentRun(query.id, config.strategy, status, kept, tool_log, events)


def verify_grounding(response, tool_log: ToolLog | None) -> list[str]:
    """URLs in ``response`` that never appeared in ``tool_log``.

    ``response`` may be the wire string, a parsed list of ``{"name", "url"}``
    objects, a list of :class:`Retrieval`, or an :class:`AgentRun`.
    """
    if isinstance(response, AgentRun):
        response = response.retrievals
    if isinstance(response, str):
        if response == SENTINEL:
            return []
        response = json.loads(response)
    allowed = tool_log.urls() if tool_log is not None else set()
    violations = []
    for item in response:
        url = item.url if isinstance(item, Retrieval) else item["url"]
        if url not in allowed:
            violations.append(f"url not in tool log: {url}")
    return violations


def answered_count(runs: Iterable[AgentRun]) -> int:
    return sum(1 for r in runs if r.status == ANSWERED and r.retrievals)


# --- human-in-the-loop handoff --------------------------------------------

AUTH_REQUIRED, PAYWALL, CAPTCHA = "auth_required", "paywall", "captcha"
BLOCKED, RESUMED, ABANDONED = "blocked", "resumed", "abandoned"

_LOGIN_MARKERS = ("type=\"password\"", "type='password'", "type=password", "sign in", "log in", "login")
_CAPTCHA_MARKERS = ("captcha", "are you a robot", "verify you are human")


class HandoffStateError(RuntimeError):
    pass


def detect_blocker(http_status: int | None, body: str | None = None) -> str | None:
    """Classify an access blocker from a fetch response, if any."""
    text = (body or "").lower()
    if any(m in text for m in _CAPTCHA_MARKERS) and http_status in (200, 403, 429):
        return CAPTCHA
    if http_status == 401:
        return AUTH_REQUIRED
    if http_status == 402:
        return PAYWALL
    if http_status == 403 and any(m in text for m in _LOGIN_MARKERS):
        return AUTH_REQUIRED
    return None


@dataclass(frozen=True)
class HandoffTicket:
    retrieval: Retrieval
    blocker: str
    state: str = BLOCKED
    human_note: str | None = None

    def to_dict(self) -> dict:
        return {"retrieval": self.retrieval.to_dict(), "blocker": self.blocker, "state": self.state,
                "human_note": self.human_note}


class HandoffQueue:
    """Parks blocked retrievals; resuming re-enqueues each fetch exactly once."""

    def __init__(self):
        self.tickets: dict[tuple[str, str, str], HandoffTicket] = {}
        self.pending_fetches: list[Retrieval] = []

    @staticmethod
    def _key(r: Retrieval) -> tuple[str, str, str]:
        return (r.strategy, r.query_id, r.url)

    def handoff(self, retrieval: Retrieval, blocker: str) -> HandoffTicket:
        if blocker not in (AUTH_REQUIRED, PAYWALL, CAPTCHA):
            raise ValueError(f"unknown blocker {blocker!r}")
        key = self._key(retrieval)
        if key in self.tickets:
            return self.tickets[key]
        ticket = HandoffTicket(retrieval, blocker)
        self.tickets[key] = ticket
        return ticket

    def _transition(self, ticket: HandoffTicket, state: str, note: str | None) -> HandoffTicket:
        current = self.tickets.get(self._key(ticket.retrieval), ticket)
        if current.state != BLOCKED:
            raise HandoffStateError(f"ticket is {current.state}, only blocked tickets can change")
        new = replace(current, state=state, human_note=note)
        self.tickets[self._key(ticket.retrieval)] = new
        return new

    def resume(self, ticket: HandoffTicket, human_note: str | None = None) -> HandoffTicket:
        new = self._transition(ticket, RESUMED, human_note)
        self.pending_fetches.append(new.retrieval)
        return new

    def abandon(self, ticket: HandoffTicket, human_note: str | None = None) -> HandoffTicket:
        return self._transition(ticket, ABANDONED, human_note)

    def drain(self) -> list[Retrieval]:
        out, self.pending_fetches = self.pending_fetches, []
        return out

