"""Deterministic rule-cascade judge.

This is the offline oracle for the rubric suite and the default judge
for reproducible runs. Every label comes with verbatim quotes from the
snapshot that triggered the rule.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from urllib.parse import urlsplit

from ..index import tokenize
from ..lexicon import (
    EXPLORER_MARKERS,
    MACHINE_READABLE_EXTS,
    METADATA_TERMS,
    NARRATIVE_DATA_WORDS,
    PLACES,
    STOPWORDS,
    UNIT_WORDS,
)
from .rubrics import (
    ACCESSIBILITY,
    DATA_EXPLORER,
    DATA_NARRATIVE,
    DATA_REGISTRY,
    DISCOVERY_PORTAL,
    NO_DATA,
    PAGE_TYPE,
    RAW_DATA,
    RELEVANCE,
)

BACKEND_ID = "heuristic-v1"

_LINK = re.compile(r"(!?)\[([^\]\n]*)\]\(([^)\s]+)\)")
_FENCE_OPEN = re.compile(r"^```(\w*)\s*$")
_NUMBER = re.compile(r"^[$€£]?\d[\d,]*(\.\d+)?%?$")
_YEAR = re.compile(r"^(19|20)\d\d$")
_SENTENCE_END = re.compile(r"[.!?][\"')\]]*$")
_API = re.compile(r"\bAPI endpoint\b", re.IGNORECASE)
_RESULT_COUNT = re.compile(r"\b\d[\d,]*\s+(datasets|results|data sets)\b", re.IGNORECASE)
_SEARCH_LINE = re.compile(r"\bsearch\b", re.IGNORECASE)
_CHART_IMG = re.compile(r"chart|graph|map|plot|dashboard", re.IGNORECASE)
_MR_FENCE_LANGS = frozenset(MACHINE_READABLE_EXTS) | {"geo+json", "ld+json", "rdf+xml", "turtle"}


@dataclass
class PageFeatures:
    lines: list[str]
    tokens: frozenset
    raw_fence: str | None = None  # "```csv\nfirst row" excerpt when the body itself is data
    mr_links: list[str] = field(default_factory=list)
    download_links: list[str] = field(default_factory=list)
    pdf_links: list[str] = field(default_factory=list)
    chart_images: list[str] = field(default_factory=list)
    api_lines: list[str] = field(default_factory=list)
    table_rows: list[str] = field(default_factory=list)
    stat_lines: list[str] = field(default_factory=list)
    stat_count: int = 0
    metadata_hits: list[tuple[str, str]] = field(default_factory=list)  # (term, line)
    explorer_lines: list[str] = field(default_factory=list)
    search_lines: list[str] = field(default_factory=list)
    listing_links: int = 0
    listing_lines: list[str] = field(default_factory=list)
    prose_lines: int = 0
    content_lines: int = 0
    first_prose: str | None = None

    @property
    def first_line(self) -> str | None:
        for line in self.lines:
            if line.strip():
                return line.strip()
        return None


def _link_ext(href: str) -> str:
    path = urlsplit(href).path.lower()
    last = path.rsplit("/", 1)[-1]
    return last.rsplit(".", 1)[-1] if "." in last else ""


def _is_prose(line: str) -> bool:
    return len(line.split()) >= 8 and bool(_SENTENCE_END.search(line))


def _stat_hits(line: str) -> int:
    words = [w.strip(",;:()!?\"'").rstrip(".").lower() for w in line.split()]
    hits = 0
    for i, w in enumerate(words):
        if not _NUMBER.match(w):
            continue
        if w.endswith("%") or w[:1] in "$€£":
            hits += 1
            continue
        nxt = words[i + 1] if i + 1 < len(words) else ""
        prev = words[i - 1] if i > 0 else ""
        if nxt in UNIT_WORDS or prev in UNIT_WORDS:
            hits += 1
    return hits


def visible(text: str) -> str:
    """``text`` with link and image targets dropped, keeping their labels."""
    return _LINK.sub(lambda m: m.group(2), text)


@lru_cache(maxsize=256)
def analyze(markdown: str) -> PageFeatures:
    lines = markdown.split("\n")
    f = PageFeatures(lines=lines, tokens=frozenset(tokenize(visible(markdown))))
    in_fence = False
    first_content = next((i for i, l in enumerate(lines) if l.strip()), None)
    for i, raw in enumerate(lines):
        line = raw.strip()
        m = _FENCE_OPEN.match(line)
        if m and not in_fence:
            in_fence = True
            lang = m.group(1).lower()
            if i == first_content and lang in _MR_FENCE_LANGS and i + 1 < len(lines):
                f.raw_fence = line + "\n" + lines[i + 1].strip()
            continue
        if in_fence:
            if line == "```":
                in_fence = False
            continue
        if not line:
            continue
        lower = line.lower()
        for bang, text, href in _LINK.findall(line):
            snippet = f"{bang}[{text}]({href})"
            if bang:
                if _CHART_IMG.search(text) or _CHART_IMG.search(href):
                    f.chart_images.append(snippet)
                continue
            ext = _link_ext(href)
            if ext in MACHINE_READABLE_EXTS:
                f.mr_links.append(snippet)
                f.download_links.append(snippet)
            elif "download" in text.lower():
                f.download_links.append(snippet)
            elif ext == "pdf":
                f.pdf_links.append(snippet)
        if _API.search(line):
            f.api_lines.append(line)
        if line.startswith("|"):
            if set(line) <= set("|-: "):
                continue
            f.table_rows.append(line)
            continue
        if line.startswith("#"):
            heading = True
        else:
            heading = False
            f.content_lines += 1
        if line.startswith(("- [", "* [")) or re.match(r"^\d+\. \[", line):
            f.listing_links += 1
            f.listing_lines.append(line)
        if _SEARCH_LINE.search(line) and ("input:" in lower or "dataset" in lower or heading):
            f.search_lines.append(line)
        if _RESULT_COUNT.search(line):
            f.listing_lines.insert(0, line)
            f.listing_links += 5
        for marker in EXPLORER_MARKERS:
            if re.search(r"\b" + re.escape(marker) + r"\b", lower):
                f.explorer_lines.append(line)
                break
        for term in METADATA_TERMS:
            if re.search(r"\b" + re.escape(term) + r"\b", lower):
                f.metadata_hits.append((term, line))
        if not heading:
            hits = _stat_hits(line)
            if hits:
                f.stat_count += hits
                f.stat_lines.append(line)
            if _is_prose(line):
                f.prose_lines += 1
                if f.first_prose is None:
                    f.first_prose = line
    return f


def _distinct_metadata(f: PageFeatures) -> list[tuple[str, str]]:
    seen: dict[str, str] = {}
    for term, line in f.metadata_hits:
        key = "license" if term == "licence" else term
        seen.setdefault(key, line)
    return list(seen.items())


def accessibility(markdown: str) -> tuple[int, list[str], str]:
    f = analyze(markdown)
    if f.raw_fence:
        return 6, [f.raw_fence], "page body is itself a machine-readable file"
    if f.mr_links:
        return 6, f.mr_links[:3], "direct link to a machine-readable file"
    if f.api_lines:
        return 6, f.api_lines[:1], "page documents an API endpoint"
    if f.table_rows:
        return 5, f.table_rows[:2], "data presented in a structured table"
    if f.stat_count >= 3:
        return 4, f.stat_lines[:3], "statistics embedded in prose"
    markers = f.chart_images + f.pdf_links + f.explorer_lines
    if markers:
        return 3, markers[:2], "data confined to charts, dashboards or documents"
    quote = [f.first_line] if f.first_line else []
    return 2, quote, "reachable page without data"


def page_type(markdown: str) -> tuple[str, list[str], str]:
    f = analyze(markdown)
    if f.raw_fence:
        return RAW_DATA, [f.raw_fence], "machine-readable body"
    meta = _distinct_metadata(f)
    if f.download_links and len(meta) >= 3:
        quotes = f.download_links[:1] + [line for _, line in meta[:3]]
        return DATA_REGISTRY, list(dict.fromkeys(quotes)), (
            "download section with metadata: " + ", ".join(t for t, _ in meta[:5])
        )
    if f.search_lines and f.listing_links >= 5:
        quotes = f.search_lines[:1] + f.listing_lines[:1]
        return DISCOVERY_PORTAL, list(dict.fromkeys(quotes)), "search interface over many datasets"
    if f.explorer_lines or f.chart_images:
        return DATA_EXPLORER, (f.explorer_lines + f.chart_images)[:2], "chart or dashboard without metadata"
    if f.content_lines and f.prose_lines / f.content_lines > 0.7:
        mentions = f.stat_lines[:1] or [
            line for line in f.lines if set(tokenize(visible(line))) & NARRATIVE_DATA_WORDS
        ][:1]
        if mentions:
            quotes = [f.first_prose] + mentions if f.first_prose else mentions
            return DATA_NARRATIVE, list(dict.fromkeys(q.strip() for q in quotes)), "prose built around data"
    quote = [f.first_line] if f.first_line else []
    return NO_DATA, quote, "no dataset focus"


def _places_in(text: str) -> set[str]:
    found = set()
    padded = f" {' '.join(tokenize(text))} "
    for place in PLACES:
        if f" {place} " in padded:
            found.add(place)
    return found


def _years_in(tokens) -> set[str]:
    return {t for t in tokens if _YEAR.match(t)}


RELEVANCE_THRESHOLD = 0.6
PARTIAL_THRESHOLD = 0.5


def relevance(query: str, markdown: str, threshold: float = RELEVANCE_THRESHOLD) -> tuple[int, list[str], str]:
    f = analyze(markdown)
    q_tokens = [t for t in dict.fromkeys(tokenize(query)) if t not in STOPWORDS]
    q_places = _places_in(query)
    q_years = _years_in(q_tokens)
    place_words = {w for p in q_places for w in p.split()}
    topic = [t for t in q_tokens if t not in q_years and t not in place_words] or q_tokens
    if not topic:
        quote = [f.first_line] if f.first_line else []
        return 0, quote, "query has no content words"
    hit = [t for t in topic if t in f.tokens]
    overlap = len(hit) / len(topic)

    conflict_lines: list[str] = []
    page_years = _years_in(f.tokens)
    if q_years and page_years and not (q_years & page_years):
        conflict_lines += [l.strip() for l in f.lines if _years_in(tokenize(visible(l))) - q_years][:1]
    if q_places:
        page_places = _places_in(visible(markdown))
        if page_places and not (q_places & page_places):
            conflict_lines += [l.strip() for l in f.lines if _places_in(visible(l))][:1]

    best, best_hits = None, 0
    for line in f.lines:
        n = len(set(tokenize(visible(line))) & set(hit))
        if n > best_hits:
            best, best_hits = line.strip(), n
    quotes = [best] if best else ([f.first_line] if f.first_line else [])

    if overlap >= threshold and conflict_lines:
        return 1, list(dict.fromkeys(quotes + conflict_lines)), (
            f"on topic ({len(hit)}/{len(topic)} terms) but conflicts with an explicit year or place"
        )
    has_data = accessibility(markdown)[0] >= 3 or bool(f.tokens & {"data", "dataset", "statistics"})
    if overlap >= threshold and has_data:
        return 2, quotes, f"matches {len(hit)}/{len(topic)} query terms and offers data"
    if overlap >= threshold:
        return 1, quotes, f"on topic ({len(hit)}/{len(topic)} terms) but no data on the page"
    if overlap >= PARTIAL_THRESHOLD:
        return 1, quotes, f"partial match ({len(hit)}/{len(topic)} query terms)"
    return 0, quotes, f"matches {len(hit)}/{len(topic)} query terms"


class HeuristicBackend:
    backend_id = BACKEND_ID

    def __init__(self, relevance_threshold: float = RELEVANCE_THRESHOLD):
        self.relevance_threshold = relevance_threshold

    def judge(self, dimension: str, query: str, markdown: str, dataset_name: str = ""):
        if dimension == RELEVANCE:
            return relevance(query, markdown, self.relevance_threshold)
        if dimension == ACCESSIBILITY:
            return accessibility(markdown)
        if dimension == PAGE_TYPE:
            return page_type(markdown)
        raise ValueError(f"unknown dimension {dimension!r}")
