"""Rubric judging of frozen snapshots.

``judge_relevance``, ``judge_accessibility`` and ``judge_page_type`` wrap a
backend (heuristic or LLM) and enforce the cross-cutting rules: the
unreachable labels are assigned by the pipeline, never by a backend, and
every accepted judgment on a reachable page carries verified quotes.
"""
from __future__ import annotations

import re

from ..lexicon import MACHINE_READABLE_EXTS
from ..snapshots import OK, UNDETERMINED, UNREACHABLE, Snapshot
from .evidence import collapse_ws, evidence_violations, validate_evidence
from .heuristic import HeuristicBackend
from .llm_backend import JudgeFailure, LLMJudgeBackend, load_template, render
from .rubrics import (
    ACCESSIBILITY,
    DIMENSIONS,
    MODEL_LABELS,
    PAGE_TYPE,
    PAGE_TYPES,
    RELEVANCE,
    UNREACHABLE_LABELS,
    Judgment,
    coerce_label,
)

PIPELINE_BACKEND = "pipeline"

__all__ = [
    "ACCESSIBILITY", "DIMENSIONS", "PAGE_TYPE", "PAGE_TYPES", "RELEVANCE",
    "HeuristicBackend", "Judgment", "JudgeFailure", "LLMJudgeBackend",
    "coerce_label", "judge_accessibility", "judge_all", "judge_page_type", "judge_relevance",
    "load_template", "render", "validate_evidence",
]

_MR_EVIDENCE = re.compile(
    r"\.(" + "|".join(MACHINE_READABLE_EXTS) + r")\b|\bapi\b|^```(" + "|".join(MACHINE_READABLE_EXTS) + r")",
    re.IGNORECASE,
)


class UndeterminedPage(ValueError):
    """Raised when asked to judge a page whose fetch outcome is undetermined."""


def _judge(dimension, query, snapshot, dataset_name, backend, fetch_status) -> Judgment:
    if fetch_status == UNREACHABLE:
        return Judgment(dimension, UNREACHABLE_LABELS[dimension], (), "page unreachable", PIPELINE_BACKEND)
    if fetch_status == UNDETERMINED or snapshot is None:
        raise UndeterminedPage("undetermined pages go to human review, not the judge")
    text = snapshot if isinstance(snapshot, str) else snapshot.markdown
    try:
        label, evidence, rationale = backend.judge(dimension, query, text, dataset_name)
    except JudgeFailure:
        raise
    except Exception as exc:
        raise JudgeFailure(f"{dimension}: backend error: {exc}") from exc
    if label not in MODEL_LABELS[dimension]:
        raise JudgeFailure(f"{dimension}: backend assigned pipeline-only label {label!r}")
    if collapse_ws(text) and not evidence:
        raise JudgeFailure(f"{dimension}: no evidence for a reachable page")
    bad = evidence_violations(evidence, text)
    if bad:
        raise JudgeFailure(f"{dimension}: ungrounded evidence {bad[0]!r}")
    if dimension == ACCESSIBILITY and label == 6 and not any(_MR_EVIDENCE.search(q) for q in evidence):
        raise JudgeFailure("accessibility 6 needs a quoted machine-readable link or API mention")
    return Judgment(dimension, label, tuple(evidence), rationale, backend.backend_id)


def judge_relevance(query: str, snapshot: Snapshot | str | None, dataset_name: str, backend,
                    fetch_status: str = OK) -> Judgment:
    return _judge(RELEVANCE, query, snapshot, dataset_name, backend, fetch_status)


def judge_accessibility(snapshot: Snapshot | str | None, fetch_status: str, backend,
                        query: str = "", dataset_name: str = "") -> Judgment:
    return _judge(ACCESSIBILITY, query, snapshot, dataset_name, backend, fetch_status)


def judge_page_type(snapshot: Snapshot | str | None, fetch_status: str, backend,
                    query: str = "", dataset_name: str = "") -> Judgment:
    return _judge(PAGE_TYPE, query, snapshot, dataset_name, backend, fetch_status)


def judge_all(query: str, snapshot, dataset_name: str, backend, fetch_status: str = OK) -> dict[str, Judgment]:
    """All three dimensions for one retrieval; raises JudgeFailure if any fails."""
    return {
        RELEVANCE: judge_relevance(query, snapshot, dataset_name, backend, fetch_status),
        ACCESSIBILITY: judge_accessibility(snapshot, fetch_status, backend, query, dataset_name),
        PAGE_TYPE: judge_page_type(snapshot, fetch_status, backend, query, dataset_name),
    }
