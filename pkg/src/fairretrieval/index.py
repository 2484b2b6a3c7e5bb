"""Local keyword index over validated dataset records, with exact facets.

Ranking is BM25 (k1=1.2, b=0.75) over name, description and keywords,
with name tokens counted twice. Facets are hard predicates checked on
every scored document before the result cut-off, so a faceted search
returns exactly the matching documents, in score order.
"""
from __future__ import annotations

import array
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable
from urllib.parse import urlsplit

from . import _accel
from .records import DatasetMetadata, read_ndjson, write_ndjson

INDEX_MAGIC = "fairretrieval-index"
INDEX_VERSION = 1

LICENSE_CLASSES = ("commercial_ok", "noncommercial", "unknown")
DATA_TYPES = ("tabular", "geospatial", "image", "text", "other")

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class IndexFormatError(RuntimeError):
    pass


# license identifiers, already lowercased and stripped of version suffixes
LICENSE_TABLE = {
    "cc0": "commercial_ok",
    "cc-zero": "commercial_ok",
    "pdm": "commercial_ok",
    "public-domain": "commercial_ok",
    "cc-by": "commercial_ok",
    "cc-by-sa": "commercial_ok",
    "cc-by-nd": "commercial_ok",
    "cc-by-nc": "noncommercial",
    "cc-by-nc-sa": "noncommercial",
    "cc-by-nc-nd": "noncommercial",
    "odc-by": "commercial_ok",
    "odc-odbl": "commercial_ok",
    "odbl": "commercial_ok",
    "pddl": "commercial_ok",
    "odc-pddl": "commercial_ok",
    "ogl-uk": "commercial_ok",
    "ogl": "commercial_ok",
    "etalab": "commercial_ok",
    "dl-de-by": "commercial_ok",
    "mit": "commercial_ok",
    "apache": "commercial_ok",
    "bsd-3-clause": "commercial_ok",
    "us-pd": "commercial_ok",
    "creative commons attribution": "commercial_ok",
    "creative commons attribution-sharealike": "commercial_ok",
    "creative commons attribution-noncommercial": "noncommercial",
    "creative commons attribution-noncommercial-sharealike": "noncommercial",
    "creative commons zero": "commercial_ok",
    "open data commons open database license": "commercial_ok",
}

_VERSION_SUFFIX = re.compile(r"[\s_-]+v?\d+(\.\d+)*(\s+international)?$")


def _license_key(raw: str) -> str:
    s = raw.strip().lower()
    if s.startswith(("http://", "https://")):
        parts = urlsplit(s)
        segs = [p for p in parts.path.split("/") if p]
        host = parts.netloc
        if "creativecommons.org" in host:
            if segs[:2] == ["publicdomain", "zero"]:
                return "cc0"
            if segs[:2] == ["publicdomain", "mark"]:
                return "pdm"
            if len(segs) >= 2 and segs[0] == "licenses":
                return "cc-" + segs[1]
        if "opendatacommons.org" in host and len(segs) >= 2 and segs[0] == "licenses":
            return {"by": "odc-by", "odbl": "odbl", "pddl": "pddl"}.get(segs[1], segs[1])
        if "nationalarchives.gov.uk" in host and "open-government-licence" in s:
            return "ogl-uk"
        return s
    s = _VERSION_SUFFIX.sub("", s)
    s = re.sub(r"\s+license$|\s+licence$", "", s).strip()
    s = re.sub(r"^cc[\s_]", "cc-", s)
    s = re.sub(r"(?<=\w)[\s_](?=(by|nc|sa|nd)\b)", "-", s) if s.startswith("cc-") else s
    return s


def classify_license(raw: str | None) -> str:
    if not raw or not raw.strip():
        return "unknown"
    return LICENSE_TABLE.get(_license_key(raw), "unknown")


# media types and extension tokens; ordered by facet priority below
MEDIA_TYPE_TABLE = {
    "tabular": {
        "text/csv", "csv", "text/tab-separated-values", "tsv", "xlsx", "xls", "ods",
        "application/vnd.ms-excel",
        "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
        "application/vnd.oasis.opendocument.spreadsheet",
        "parquet", "application/vnd.apache.parquet", "application/x-parquet",
    },
    "geospatial": {
        "application/geo+json", "geojson", "application/vnd.geo+json", "shp", "shapefile",
        "application/x-shapefile", "kml", "application/vnd.google-earth.kml+xml", "kmz",
        "application/vnd.google-earth.kmz", "gpkg", "application/geopackage+sqlite3",
        "geotiff", "image/tiff; application=geotiff", "gml", "application/gml+xml", "wms", "wfs",
    },
    "image": {
        "image/png", "png", "image/jpeg", "jpeg", "jpg", "image/gif", "gif", "image/tiff",
        "tiff", "tif", "image/svg+xml", "svg", "image/webp", "webp",
    },
    "text": {
        "text/plain", "txt", "application/pdf", "pdf", "text/html", "html", "htm",
        "application/msword", "doc", "docx", "text/markdown", "md", "rtf",
        "application/vnd.openxmlformats-officedocument.wordprocessingml.document",
    },
}
_TYPE_PRIORITY = ("tabular", "geospatial", "image", "text")


def _format_tokens(fmt: str, url: str | None) -> list[str]:
    out = []
    f = fmt.strip().lower()
    if f:
        out.append(f)
        out.append(f.lstrip("."))
        out.append(f.split(";")[0].strip())
    if url:
        path = urlsplit(url).path.lower()
        if "." in path.rsplit("/", 1)[-1]:
            out.append(path.rsplit(".", 1)[-1])
    return out


def classify_data_type(record: DatasetMetadata) -> str:
    found = set()
    for d in record.distributions:
        toks = _format_tokens(d.encoding_format, d.content_url)
        for cat in _TYPE_PRIORITY:
            if any(t in MEDIA_TYPE_TABLE[cat] for t in toks) or (
                cat == "image" and any(t.startswith("image/") and "geotiff" not in t for t in toks)
            ):
                found.add(cat)
    for cat in _TYPE_PRIORITY:
        if cat in found:
            return cat
    return "other"


@dataclass(frozen=True)
class FacetConstraints:
    reference_date: date
    license_class: str | None = None
    data_type: str | None = None
    last_updated_within: int | None = None  # days

    def __post_init__(self):
        if not isinstance(self.reference_date, date):
            raise TypeError("reference_date must be a datetime.date")
        if self.license_class is not None and self.license_class not in LICENSE_CLASSES:
            raise ValueError(f"unknown license class {self.license_class!r}")
        if self.data_type is not None and self.data_type not in DATA_TYPES:
            raise ValueError(f"unknown data type {self.data_type!r}")
        if self.last_updated_within is not None and self.last_updated_within <= 0:
            raise ValueError("last_updated_within must be positive")

    def accepts(self, license_class: str, data_type: str, modified: date | None) -> bool:
        if self.license_class is not None and license_class != self.license_class:
            return False
        if self.data_type is not None and data_type != self.data_type:
            return False
        if self.last_updated_within is not None:
            if modified is None:
                return False
            if modified < self.reference_date - timedelta(days=self.last_updated_within):
                return False
        return True


@dataclass(frozen=True)
class SearchHit:
    record: DatasetMetadata
    score: float
    matched_terms: tuple[str, ...]


@dataclass
class Index:
    records: list[DatasetMetadata]
    postings: dict[str, tuple[array.array, array.array]]
    doc_lens: array.array
    avgdl: float
    license_classes: list[str]
    data_types: list[str]
    duplicates: int = 0
    k1: float = 1.2
    b: float = 0.75
    name_weight: float = 2.0
    _token_sets: list[frozenset] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.records)

    def idf(self, term: str) -> float:
        n = len(self.records)
        df = len(self.postings[term][0]) if term in self.postings else 0
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def search(
        self,
        keywords: str,
        facets: FacetConstraints | None = None,
        limit: int = 10,
        kernel: str | None = None,
    ) -> list[SearchHit]:
        if not isinstance(keywords, str) or not keywords.strip():
            raise ValueError("search keywords must be a non-empty string")
        if limit < 1:
            raise ValueError("limit must be >= 1")
        terms = list(dict.fromkeys(tokenize(keywords)))
        n = len(self.records)
        if n == 0 or not terms:
            return []
        scores = array.array("d", bytes(8 * n))
        for term in terms:
            if term not in self.postings:
                continue
            ids, tfs = self.postings[term]
            _accel.bm25_accumulate(
                scores, ids, tfs, self.doc_lens, self.idf(term), self.k1, self.b, self.avgdl,
                backend=kernel,
            )
        hits = []
        for doc, score in enumerate(scores):
            if score <= 0.0:
                continue
            rec = self.records[doc]
            if facets is not None and not facets.accepts(
                self.license_classes[doc], self.data_types[doc], rec.date_modified
            ):
                continue
            matched = tuple(t for t in terms if t in self._token_sets[doc])
            hits.append(SearchHit(rec, score, matched))
        hits.sort(key=lambda h: (-h.score, h.record.landing_url))
        return hits[:limit]

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_ndjson(self.records, d / "records.ndjson")
        meta = {
            "magic": INDEX_MAGIC,
            "version": INDEX_VERSION,
            "documents": len(self.records),
            "duplicates": self.duplicates,
            "k1": self.k1,
            "b": self.b,
            "name_weight": self.name_weight,
        }
        (d / "index.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _doc_terms(rec: DatasetMetadata, name_weight: float) -> Counter:
    tf: Counter = Counter()
    for t in tokenize(rec.name):
        tf[t] += name_weight
    for t in tokenize(rec.description):
        tf[t] += 1.0
    for kw in rec.keywords:
        for t in tokenize(kw):
            tf[t] += 1.0
    return tf


def build_index(
    records: Iterable[DatasetMetadata],
    k1: float = 1.2,
    b: float = 0.75,
    name_weight: float = 2.0,
) -> Index:
    """Index ``records``; the first record per landing URL wins."""
    kept: list[DatasetMetadata] = []
    seen: set[str] = set()
    dups = 0
    for rec in records:
        if rec.landing_url in seen:
            dups += 1
            continue
        seen.add(rec.landing_url)
        kept.append(rec)

    ids: dict[str, array.array] = {}
    tfs: dict[str, array.array] = {}
    lens = array.array("d")
    token_sets = []
    for doc, rec in enumerate(kept):
        tf = _doc_terms(rec, name_weight)
        lens.append(float(sum(tf.values())))
        token_sets.append(frozenset(tf))
        for term, count in tf.items():
            if term not in ids:
                ids[term] = array.array("i")
                tfs[term] = array.array("d")
            ids[term].append(doc)
            tfs[term].append(count)
    total = sum(lens)
    avgdl = total / len(lens) if lens and total > 0 else 1.0
    return Index(
        records=kept,
        postings={t: (ids[t], tfs[t]) for t in ids},
        doc_lens=lens,
        avgdl=avgdl,
        license_classes=[classify_license(r.license) for r in kept],
        data_types=[classify_data_type(r) for r in kept],
        duplicates=dups,
        k1=k1,
        b=b,
        name_weight=name_weight,
        _token_sets=token_sets,
    )


def search(
    index: Index, keywords: str, facets: FacetConstraints | None = None, limit: int = 10
) -> list[SearchHit]:
    return index.search(keywords, facets, limit)


def load_index(directory: str | Path) -> Index:
    d = Path(directory)
    meta_path = d / "index.json"
    if not meta_path.exists():
        raise IndexFormatError(f"{d} is not an index directory (no index.json)")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise IndexFormatError(f"{meta_path}: corrupt header") from exc
    if meta.get("magic") != INDEX_MAGIC:
        raise IndexFormatError(f"{meta_path}: bad magic {meta.get('magic')!r}")
    if meta.get("version") != INDEX_VERSION:
        raise IndexFormatError(
            f"{meta_path}: index version {meta.get('version')} unsupported (expected {INDEX_VERSION})"
        )
    idx = build_index(
        read_ndjson(d / "records.ndjson"), meta["k1"], meta["b"], meta["name_weight"]
    )
    if len(idx) != meta["documents"]:
        raise IndexFormatError(f"{d}: document count mismatch")
    idx.duplicates = meta["duplicates"]
    return idx
