"""Rubric label domains and the judgment record."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

RELEVANCE = "relevance"
ACCESSIBILITY = "accessibility"
PAGE_TYPE = "page_type"
DIMENSIONS = (RELEVANCE, ACCESSIBILITY, PAGE_TYPE)

RELEVANCE_LABELS = (-1, 0, 1, 2)
ACCESSIBILITY_LEVELS = (1, 2, 3, 4, 5, 6)

DATA_REGISTRY = "DATA_REGISTRY"
RAW_DATA = "RAW_DATA"
DATA_EXPLORER = "DATA_EXPLORER"
DATA_NARRATIVE = "DATA_NARRATIVE"
DISCOVERY_PORTAL = "DISCOVERY_PORTAL"
NO_DATA = "NO_DATA"
UNREACHABLE = "UNREACHABLE"
PAGE_TYPES = (
    DATA_REGISTRY, RAW_DATA, DATA_EXPLORER, DATA_NARRATIVE, DISCOVERY_PORTAL, NO_DATA, UNREACHABLE,
)
# tie-break when several page-type rules fire, most actionable first
PAGE_TYPE_PRECEDENCE = (RAW_DATA, DATA_REGISTRY, DISCOVERY_PORTAL, DATA_EXPLORER, DATA_NARRATIVE, NO_DATA)

# what a judge may assign to a reachable page; the unreachable labels are pipeline-only
MODEL_LABELS = {
    RELEVANCE: (0, 1, 2),
    ACCESSIBILITY: (2, 3, 4, 5, 6),
    PAGE_TYPE: PAGE_TYPE_PRECEDENCE,
}
UNREACHABLE_LABELS = {RELEVANCE: -1, ACCESSIBILITY: 1, PAGE_TYPE: UNREACHABLE}

Label = Union[int, str]


def label_domain(dimension: str) -> tuple:
    return {RELEVANCE: RELEVANCE_LABELS, ACCESSIBILITY: ACCESSIBILITY_LEVELS, PAGE_TYPE: PAGE_TYPES}[
        dimension
    ]


def coerce_label(dimension: str, value) -> Label:
    """Parse a label from JSON or CSV input; raises ValueError outside the domain."""
    if dimension == PAGE_TYPE:
        label = str(value).strip().upper()
    else:
        if isinstance(value, bool):
            raise ValueError(f"bad {dimension} label {value!r}")
        label = int(str(value).strip())
    if label not in label_domain(dimension):
        raise ValueError(f"{value!r} is not a valid {dimension} label")
    return label


@dataclass(frozen=True)
class Judgment:
    dimension: str
    label: Label
    evidence: tuple[str, ...]
    rationale: str
    backend_id: str

    def __post_init__(self):
        if self.dimension not in DIMENSIONS:
            raise ValueError(f"unknown dimension {self.dimension!r}")
        if self.label not in label_domain(self.dimension):
            raise ValueError(f"{self.label!r} outside the {self.dimension} rubric")
        object.__setattr__(self, "evidence", tuple(self.evidence))

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "label": self.label,
            "evidence": list(self.evidence),
            "rationale": self.rationale,
            "backend_id": self.backend_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Judgment":
        return cls(d["dimension"], coerce_label(d["dimension"], d["label"]), tuple(d["evidence"]),
                   d.get("rationale", ""), d["backend_id"])
