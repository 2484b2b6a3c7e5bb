"""Human review queue: undetermined pages, judge failures and the gold sample.

Annotation is a file round trip. ``export`` writes a JSON document that
annotators edit, ``import_annotations`` reads their labels back, and
``merge_consensus`` settles each item. Only merged items feed reports.
"""
from __future__ import annotations

import json
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Sequence, TypeVar

from .judge.rubrics import ACCESSIBILITY, DIMENSIONS, PAGE_TYPE, RELEVANCE, coerce_label

UNDETERMINED_SCRAPE, JUDGE_FAILURE, GOLD_SAMPLE = "undetermined_scrape", "judge_failure", "gold_sample"
REASONS = (UNDETERMINED_SCRAPE, JUDGE_FAILURE, GOLD_SAMPLE)
OPEN, ANNOTATED, MERGED = "open", "annotated", "merged"

T = TypeVar("T")


class ReviewStateError(RuntimeError):
    pass


def _labels(raw: dict) -> dict:
    missing = [d for d in DIMENSIONS if d not in raw]
    if missing:
        raise ValueError(f"annotation lacks {', '.join(missing)}")
    return {d: coerce_label(d, raw[d]) for d in DIMENSIONS}


@dataclass
class ReviewItem:
    item_id: str
    retrieval: dict  # query_id, strategy, url, rank, dataset_name
    reason: str
    annotations: dict[str, dict] = field(default_factory=dict)
    final: dict | None = None
    consensus: bool = False
    state: str = OPEN
    note: str | None = None

    def to_dict(self) -> dict:
        return {"item_id": self.item_id, "retrieval": self.retrieval, "reason": self.reason,
                "annotations": self.annotations, "final": self.final, "consensus": self.consensus,
                "state": self.state, "note": self.note}

    @classmethod
    def from_dict(cls, d: dict) -> "ReviewItem":
        return cls(d["item_id"], d["retrieval"], d["reason"], d.get("annotations") or {},
                   d.get("final"), bool(d.get("consensus")), d.get("state", OPEN), d.get("note"))


def item_key(retrieval: dict, reason: str) -> str:
    return f"{reason}|{retrieval['strategy']}|{retrieval['query_id']}|{retrieval['url']}"


class ReviewQueue:
    """Single-writer queue persisted as newline-delimited JSON."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.items: dict[str, ReviewItem] = {}
        if self.path and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    item = ReviewItem.from_dict(json.loads(line))
                    self.items[item.item_id] = item

    def save(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps(self.items[k].to_dict(), sort_keys=True, ensure_ascii=False)
                 for k in sorted(self.items)]
        self.path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    def route(self, retrieval: dict, reason: str, note: str | None = None) -> ReviewItem:
        if reason not in REASONS:
            raise ValueError(f"unknown review reason {reason!r}")
        key = item_key(retrieval, reason)
        if key not in self.items:
            self.items[key] = ReviewItem(key, dict(retrieval), reason, note=note)
        return self.items[key]

    def get(self, item_id: str) -> ReviewItem:
        try:
            return self.items[item_id]
        except KeyError:
            raise KeyError(f"no review item {item_id!r}") from None

    def annotate(self, item_id: str, annotator: str, labels: dict) -> ReviewItem:
        item = self.get(item_id)
        if item.state == MERGED:
            raise ReviewStateError(f"{item_id} is already merged")
        item.annotations[annotator] = _labels(labels)
        item.state = ANNOTATED
        return item

    def merge_consensus(self, item_id: str, resolution: dict | None = None) -> ReviewItem:
        item = self.get(item_id)
        if item.state == MERGED:
            return item
        if len(item.annotations) < 2:
            raise ReviewStateError(f"{item_id}: merging needs two annotations, has {len(item.annotations)}")
        labelings = list(item.annotations.values())
        if all(lab == labelings[0] for lab in labelings[1:]):
            item.final, item.consensus = dict(labelings[0]), False
        elif resolution is None:
            raise ReviewStateError(f"{item_id}: annotators disagree; a consensus resolution is required")
        else:
            item.final, item.consensus = _labels(resolution), True
        item.state = MERGED
        return item

    def open_items(self) -> list[ReviewItem]:
        return [self.items[k] for k in sorted(self.items) if self.items[k].state != MERGED]

    def merged(self, reason: str | None = None) -> list[ReviewItem]:
        return [self.items[k] for k in sorted(self.items)
                if self.items[k].state == MERGED and (reason is None or self.items[k].reason == reason)]

    def export(self, path: str | Path, annotator: str | None = None) -> int:
        """Write open items as an editable JSON document; returns the item count."""
        rows = []
        for item in self.open_items():
            blank = {RELEVANCE: None, ACCESSIBILITY: None, PAGE_TYPE: None}
            rows.append({
                "item_id": item.item_id,
                "reason": item.reason,
                "retrieval": item.retrieval,
                "annotator": annotator,
                "labels": item.annotations.get(annotator, blank) if annotator else blank,
                "resolution": None,
            })
        Path(path).write_text(json.dumps(rows, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return len(rows)

    def import_annotations(self, path: str | Path, annotator: str | None = None) -> int:
        """Read back an edited export; rows with incomplete labels are skipped."""
        rows = json.loads(Path(path).read_text(encoding="utf-8"))
        n = 0
        for row in rows:
            who = row.get("annotator") or annotator
            labels = row.get("labels") or {}
            if who and all(labels.get(d) is not None for d in DIMENSIONS):
                self.annotate(row["item_id"], who, labels)
                n += 1
            if row.get("resolution"):
                self.merge_consensus(row["item_id"], row["resolution"])
        return n


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_gold_set(
    records: Sequence[T],
    fraction: float,
    strata: Callable[[T], Hashable] | None,
    rng: random.Random,
) -> list[T]:
    """Stratified sample of ``round(fraction * N)`` records.

    Slots are shared out proportionally by largest remainder, so every
    stratum with ``fraction * size >= 1`` gets at least one item. Output
    keeps the input order.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    target = _round_half_up(fraction * len(records))
    groups: dict[Hashable, list[int]] = defaultdict(list)
    for i, rec in enumerate(records):
        groups[strata(rec) if strata else None].append(i)
    keys = sorted(groups, key=lambda k: (str(type(k)), str(k)))
    quotas = {k: fraction * len(groups[k]) for k in keys}
    alloc = {k: int(math.floor(quotas[k])) for k in keys}
    spare = target - sum(alloc.values())
    by_remainder = sorted(keys, key=lambda k: (-(quotas[k] - alloc[k]), str(k)))
    for k in by_remainder[: max(0, spare)]:
        alloc[k] += 1
    chosen: list[int] = []
    for k in keys:
        n = min(alloc[k], len(groups[k]))
        chosen.extend(rng.sample(groups[k], n))
    return [records[i] for i in sorted(chosen)]
