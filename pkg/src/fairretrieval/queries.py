"""Benchmark query loading.

Two input layouts are accepted, both UTF-8:

* TSV with columns ``id, text, language, style`` (header row optional;
  ``language`` defaults to ``en`` and ``style`` to ``keyword``)
* a JSON array of objects carrying the same keys

Query text is stored verbatim. Rewriting is the agents' job.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

STYLES = ("keyword", "natural_language")
COLUMNS = ("id", "text", "language", "style")


class QueryFormatError(ValueError):
    """A row could not be parsed. ``line`` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateQueryError(ValueError):
    pass


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    language: str = "en"
    style: str = "keyword"

    def to_dict(self) -> dict:
        return asdict(self)


def _make_query(fields: dict, line: int) -> Query:
    qid = str(fields.get("id") or "").strip()
    text = fields.get("text")
    if not qid:
        raise QueryFormatError("missing id", line)
    if not isinstance(text, str) or not text.strip():
        raise QueryFormatError("missing or empty text", line)
    language = str(fields.get("language") or "en").strip().lower()
    style = str(fields.get("style") or "keyword").strip().lower()
    if style not in STYLES:
        raise QueryFormatError(f"unknown style {style!r}", line)
    return Query(id=qid, text=text, language=language, style=style)


def _parse_tsv(content: str) -> list[Query]:
    out = []
    reader = csv.reader(io.StringIO(content), delimiter="\t", quoting=csv.QUOTE_NONE)
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 1 and [c.strip().lower() for c in row[:2]] == ["id", "text"]:
            continue
        if len(row) < 2 or len(row) > len(COLUMNS):
            raise QueryFormatError(f"expected 2-4 tab-separated columns, got {len(row)}", lineno)
        out.append(_make_query(dict(zip(COLUMNS, row)), lineno))
    return out


def _parse_json(content: str) -> list[Query]:
    try:
        data = json.loads(content)
    except json.JSONDecodeError as exc:
        raise QueryFormatError(exc.msg, exc.lineno) from exc
    if not isinstance(data, list):
        raise QueryFormatError("top level must be an array of objects", 1)
    # JSON rows are addressed by their position in the array
    out = []
    for pos, obj in enumerate(data, start=1):
        if not isinstance(obj, dict):
            raise QueryFormatError("entry is not an object", pos)
        out.append(_make_query(obj, pos))
    return out


def parse_queries(content: str) -> list[Query]:
    if not content.strip():
        return []
    if content.lstrip().startswith("["):
        queries = _parse_json(content)
    else:
        queries = _parse_tsv(content)
    seen: set[str] = set()
    for q in queries:
        if q.id in seen:
            raise DuplicateQueryError(f"duplicate query id {q.id!r}")
        seen.add(q.id)
    return queries


def load_queries(
    path: str | Path, language: str | None = None, style: str | None = None
) -> list[Query]:
    """Load queries from ``path``, keeping only rows matching the filter."""
    content = Path(path).read_text(encoding="utf-8")
    queries = parse_queries(content)
    if language is not None:
        queries = [q for q in queries if q.language == language.lower()]
    if style is not None:
        queries = [q for q in queries if q.style == style]
    return queries


def write_queries(queries: Iterable[Query], path: str | Path) -> None:
    """Write queries as canonical TSV with a header row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(COLUMNS) + "\n")
        for q in queries:
            if "\t" in q.text or "\n" in q.text:
                raise ValueError(f"query {q.id} text contains a tab or newline")
            fh.write(f"{q.id}\t{q.text}\t{q.language}\t{q.style}\n")


def convert_ntcir_topics(
    src: str | Path, dst: str | Path, language: str = "en", style: str = "keyword"
) -> int:
    """Convert a two-column NTCIR Data Search topic file (``id<TAB>text``).

    The benchmark itself is licensed separately and not bundled; this only
    rewrites an already obtained copy into the canonical layout. Returns
    the number of queries written.
    """
    rows = []
    with open(src, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise QueryFormatError("expected id<TAB>text", lineno)
            rows.append(Query(parts[0].strip(), parts[1].strip(), language, style))
    write_queries(rows, dst)
    return len(rows)
