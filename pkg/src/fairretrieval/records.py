"""Canonical dataset metadata records and their NDJSON interchange format."""
from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Iterator


@dataclass(frozen=True)
class Distribution:
    encoding_format: str = ""
    content_url: str | None = None

    def __post_init__(self):
        if not self.encoding_format and not self.content_url:
            raise ValueError("distribution needs an encoding format or a content URL")

    def to_dict(self) -> dict:
        return {"encoding_format": self.encoding_format, "content_url": self.content_url}


@dataclass(frozen=True)
class DatasetMetadata:
    name: str
    landing_url: str
    description: str = ""
    identifier: str | None = None
    license: str | None = None
    date_modified: date | None = None
    keywords: tuple[str, ...] = ()
    distributions: tuple[Distribution, ...] = ()
    creator: str | None = None

    def __post_init__(self):
        if not self.name.strip():
            raise ValueError("dataset name must be non-empty")
        # lists are accepted for convenience but stored as tuples (hashable, immutable)
        object.__setattr__(self, "keywords", tuple(self.keywords))
        object.__setattr__(self, "distributions", tuple(self.distributions))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "landing_url": self.landing_url,
            "identifier": self.identifier,
            "license": self.license,
            "date_modified": self.date_modified.isoformat() if self.date_modified else None,
            "keywords": list(self.keywords),
            "distributions": [d.to_dict() for d in self.distributions],
            "creator": self.creator,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetMetadata":
        modified = data.get("date_modified")
        return cls(
            name=data["name"],
            landing_url=data["landing_url"],
            description=data.get("description") or "",
            identifier=data.get("identifier"),
            license=data.get("license"),
            date_modified=date.fromisoformat(modified) if modified else None,
            keywords=tuple(data.get("keywords") or ()),
            distributions=tuple(
                Distribution(d.get("encoding_format") or "", d.get("content_url"))
                for d in data.get("distributions") or ()
            ),
            creator=data.get("creator"),
        )

    def to_jsonld(self) -> dict:
        """Re-emit as a schema.org/Dataset JSON-LD node."""
        node: dict = {
            "@context": "https://schema.org/",
            "@type": "Dataset",
            "name": self.name,
            "url": self.landing_url,
        }
        if self.description:
            node["description"] = self.description
        if self.identifier:
            node["identifier"] = self.identifier
        if self.license:
            node["license"] = self.license
        if self.date_modified:
            node["dateModified"] = self.date_modified.isoformat()
        if self.keywords:
            node["keywords"] = list(self.keywords)
        if self.creator:
            node["creator"] = {"@type": "Person", "name": self.creator}
        if self.distributions:
            dists = []
            for d in self.distributions:
                item: dict = {"@type": "DataDownload"}
                if d.encoding_format:
                    item["encodingFormat"] = d.encoding_format
                if d.content_url:
                    item["contentUrl"] = d.content_url
                dists.append(item)
            node["distribution"] = dists
        return node


def write_ndjson(records: Iterable[DatasetMetadata], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n


def read_ndjson(path: str | Path) -> Iterator[DatasetMetadata]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield DatasetMetadata.from_dict(json.loads(line))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad record: {exc}") from exc
