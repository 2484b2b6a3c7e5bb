"""schema.org/Dataset markup extraction, normalization and validity rules.

JSON-LD ``<script>`` blocks and microdata ``itemscope`` trees are
supported. RDFa is not. Microdata items are converted into the same
dict shape as JSON-LD nodes so one normalizer serves both.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime
from html.parser import HTMLParser
from typing import Any, Iterable
from urllib.parse import urljoin, urlsplit

from .records import DatasetMetadata, Distribution

log = logging.getLogger(__name__)

VOID_ELEMENTS = frozenset(
    "area base br col embed hr img input link meta param source track wbr".split()
)
# microdata: which attribute carries the property value for a given element
_URL_ATTR = {
    "a": "href", "area": "href", "link": "href",
    "img": "src", "audio": "src", "video": "src", "source": "src",
    "embed": "src", "iframe": "src", "track": "src", "object": "data",
}


class NormalizationError(ValueError):
    def __init__(self, message: str, block: "RawMarkupBlock"):
        super().__init__(message)
        self.block = block


@dataclass(frozen=True)
class RawMarkupBlock:
    encoding: str  # "json_ld" | "microdata"
    payload: dict
    source_url: str


@dataclass
class Diagnostics:
    """Tally of non-fatal problems seen while extracting or normalizing."""

    counts: Counter = field(default_factory=Counter)

    def bump(self, key: str, n: int = 1) -> None:
        self.counts[key] += n


@dataclass(frozen=True)
class ValidityVerdict:
    valid: bool
    reasons: tuple[str, ...] = ()


def is_dataset_type(value: Any) -> bool:
    types = value if isinstance(value, list) else [value]
    for t in types:
        if not isinstance(t, str):
            continue
        t = t.strip()
        if t == "Dataset" or t.rsplit("/", 1)[-1] == "Dataset" or t.rsplit(":", 1)[-1] == "Dataset":
            return True
    return False


class _PageParser(HTMLParser):
    """Collects JSON-LD script bodies and microdata items in one pass."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.jsonld: list[str] = []
        self.items: list[dict] = []  # top-level microdata items
        self._script: list[str] | None = None
        # element stack entries: [tag, item-or-None, itemprop-names, text-buffer-or-None, attrs]
        self._stack: list[list] = []

    def _current_item(self) -> dict | None:
        for entry in reversed(self._stack):
            if entry[1] is not None:
                return entry[1]
        return None

    def handle_starttag(self, tag, attrs):
        a = {k: (v if v is not None else "") for k, v in attrs}
        if tag == "script" and a.get("type", "").strip().lower() == "application/ld+json":
            self._script = []
            return
        props = a.get("itemprop", "").split()
        item = None
        if "itemscope" in a:
            item = {"@type": a.get("itemtype", "").split() or [""]}
            if len(item["@type"]) == 1:
                item["@type"] = item["@type"][0]
            if a.get("itemid"):
                item["@id"] = a["itemid"]
            parent = self._current_item()
            if props and parent is not None:
                for p in props:
                    _add_prop(parent, p, item)
            elif parent is None:
                self.items.append(item)
            props = []
        elif props:
            parent = self._current_item()
            if parent is not None:
                value = None
                if tag == "meta":
                    value = a.get("content", "")
                elif tag in _URL_ATTR:
                    value = a.get(_URL_ATTR[tag], "")
                elif tag in ("data", "meter") and "value" in a:
                    value = a["value"]
                elif tag == "time" and "datetime" in a:
                    value = a["datetime"]
                if value is not None:
                    for p in props:
                        _add_prop(parent, p, value)
                    props = []
        if tag in VOID_ELEMENTS:
            return
        buf = [] if props else None
        self._stack.append([tag, item, props, buf, a])

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if tag not in VOID_ELEMENTS and self._stack and self._stack[-1][0] == tag:
            self._close_top()

    def handle_endtag(self, tag):
        if tag == "script" and self._script is not None:
            self.jsonld.append("".join(self._script))
            self._script = None
            return
        # tolerate unbalanced markup: pop to the nearest matching open tag
        for idx in range(len(self._stack) - 1, -1, -1):
            if self._stack[idx][0] == tag:
                while len(self._stack) > idx:
                    self._close_top()
                return

    def _close_top(self):
        tag, item, props, buf, _ = self._stack.pop()
        if buf is not None:
            text = " ".join("".join(buf).split())
            parent = self._current_item()
            if parent is not None:
                for p in props:
                    _add_prop(parent, p, text)
            # text also belongs to enclosing text-collecting properties
            for entry in reversed(self._stack):
                if entry[3] is not None:
                    entry[3].append(" " + "".join(buf))
                    break
                if entry[1] is not None:
                    break

    def handle_data(self, data):
        if self._script is not None:
            self._script.append(data)
            return
        for entry in reversed(self._stack):
            if entry[1] is not None and entry[3] is None:
                break  # item boundary: text is not a property value
            if entry[3] is not None:
                entry[3].append(data)
                break

    def close(self):
        super().close()
        if self._script is not None:
            self.jsonld.append("".join(self._script))
            self._script = None
        while self._stack:
            self._close_top()


def _add_prop(item: dict, name: str, value: Any) -> None:
    if name in item:
        existing = item[name]
        if isinstance(existing, list):
            existing.append(value)
        else:
            item[name] = [existing, value]
    else:
        item[name] = value


def _dataset_nodes(data: Any) -> Iterable[dict]:
    """Top-level nodes and ``@graph`` members that are Datasets."""
    if isinstance(data, list):
        for node in data:
            yield from _dataset_nodes(node)
        return
    if not isinstance(data, dict):
        return
    if "@graph" in data:
        graph = data["@graph"]
        ctx = data.get("@context")
        for node in graph if isinstance(graph, list) else [graph]:
            if isinstance(node, dict) and is_dataset_type(node.get("@type")):
                if ctx is not None and "@context" not in node:
                    node = {"@context": ctx, **node}
                yield node
    if is_dataset_type(data.get("@type")):
        yield data


def extract_dataset_markup(
    html: str, source_url: str, diagnostics: Diagnostics | None = None
) -> list[RawMarkupBlock]:
    """Return one block per Dataset node found in ``html``.

    Unparseable JSON-LD is skipped and tallied under ``jsonld_parse_error``.
    """
    diag = diagnostics if diagnostics is not None else Diagnostics()
    parser = _PageParser()
    try:
        parser.feed(html)
        parser.close()
    except Exception:  # html.parser is lenient; this guards pathological input
        log.exception("HTML parse failure for %s", source_url)
        diag.bump("html_parse_error")
    blocks = []
    for text in parser.jsonld:
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            diag.bump("jsonld_parse_error")
            continue
        found = list(_dataset_nodes(data))
        if not found:
            diag.bump("non_dataset_block")
        blocks.extend(RawMarkupBlock("json_ld", node, source_url) for node in found)
    for item in parser.items:
        if is_dataset_type(item.get("@type")):
            blocks.append(RawMarkupBlock("microdata", item, source_url))
        else:
            diag.bump("non_dataset_block")
    return blocks


def _scalars(value: Any) -> list:
    if value is None:
        return []
    return value if isinstance(value, list) else [value]


def _text(value: Any, *keys: str) -> str | None:
    """First usable string from a scalar-or-array value; dicts are probed by ``keys``."""
    for v in _scalars(value):
        if isinstance(v, dict):
            for k in keys:
                got = _text(v.get(k))
                if got:
                    return got
        elif isinstance(v, (str, int, float)) and not isinstance(v, bool):
            s = str(v).strip()
            if s:
                return s
    return None


def parse_iso_date(value: str) -> date | None:
    v = value.strip()
    try:
        return date.fromisoformat(v)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(v.replace("Z", "+00:00")).date()
    except ValueError:
        return None


def normalize(block: RawMarkupBlock, diagnostics: Diagnostics | None = None) -> DatasetMetadata:
    """Map a Dataset node onto a :class:`DatasetMetadata` record."""
    p = block.payload
    name = _text(p.get("name"), "@value")
    if not name:
        raise NormalizationError("Dataset node has no name", block)
    base = block.source_url
    url = _text(p.get("url"), "@id")
    landing = urljoin(base, url) if url else base

    modified = None
    raw_date = _text(p.get("dateModified")) or _text(p.get("datePublished"))
    if raw_date:
        modified = parse_iso_date(raw_date)
        if modified is None and diagnostics is not None:
            diagnostics.bump("unparseable_date")

    keywords = []
    for kw in _scalars(p.get("keywords")):
        text = _text(kw, "name", "@value")
        if text:
            keywords.append(text)

    dists = []
    for d in _scalars(p.get("distribution")):
        if isinstance(d, str):
            dists.append(Distribution("", urljoin(base, d)))
            continue
        if not isinstance(d, dict):
            continue
        fmt = _text(d.get("encodingFormat")) or _text(d.get("fileFormat")) or ""
        content = _text(d.get("contentUrl"), "@id") or _text(d.get("url"), "@id")
        if not fmt and not content:
            if diagnostics is not None:
                diagnostics.bump("empty_distribution")
            continue
        dists.append(Distribution(fmt, urljoin(base, content) if content else None))

    return DatasetMetadata(
        name=name,
        landing_url=landing,
        description=_text(p.get("description"), "@value") or "",
        identifier=_text(p.get("identifier"), "value", "@id", "url"),
        license=_text(p.get("license"), "url", "@id", "name"),
        date_modified=modified,
        keywords=tuple(keywords),
        distributions=tuple(dists),
        creator=_text(p.get("creator"), "name", "@id"),
    )


DEFAULT_STOPLIST = frozenset(
    {"dataset", "datasets", "data", "untitled", "untitled dataset", "test", "title", "name", "n/a", "none", "null"}
)


@dataclass(frozen=True)
class ValidityRules:
    """Configurable stand-in for a learned dataset-or-not filter."""

    stoplist: frozenset = DEFAULT_STOPLIST
    min_description_chars: int = 20


def is_absolute_http_url(url: str) -> bool:
    try:
        parts = urlsplit(url)
    except ValueError:
        return False
    return parts.scheme in ("http", "https") and bool(parts.netloc) and " " not in url


def validate(record: DatasetMetadata, rules: ValidityRules = ValidityRules()) -> ValidityVerdict:
    reasons = []
    name = record.name.strip()
    if not name:
        reasons.append("empty_name")
    elif name.lower() in rules.stoplist:
        reasons.append("boilerplate_name")
    has_content = (
        len(record.description.strip()) >= rules.min_description_chars
        or bool(record.distributions)
        or bool(record.keywords)
    )
    if not has_content:
        reasons.append("no_content")
    if not is_absolute_http_url(record.landing_url):
        reasons.append("invalid_landing_url")
    return ValidityVerdict(not reasons, tuple(reasons))


@dataclass
class HarvestResult:
    records: list[DatasetMetadata]
    rejected: list[tuple[DatasetMetadata, ValidityVerdict]]
    diagnostics: Diagnostics


def harvest(
    pages: Iterable[tuple[str, str]], rules: ValidityRules = ValidityRules()
) -> HarvestResult:
    """Extract, normalize and filter ``(url, html)`` pages in order."""
    diag = Diagnostics()
    kept, rejected = [], []
    for url, html in pages:
        for block in extract_dataset_markup(html, url, diag):
            try:
                rec = normalize(block, diag)
            except NormalizationError:
                diag.bump("normalization_error")
                continue
            verdict = validate(rec, rules)
            if verdict.valid:
                kept.append(rec)
            else:
                rejected.append((rec, verdict))
                for r in verdict.reasons:
                    diag.bump(f"invalid:{r}")
    return HarvestResult(kept, rejected, diag)
