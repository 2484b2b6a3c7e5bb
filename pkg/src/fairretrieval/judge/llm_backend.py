"""LLM judge backend with a chain-of-thought evidence contract.

The model must answer with one JSON object::

    {"reasoning": "...", "evidence": ["verbatim quote", ...], "label": ...}

Output that fails the schema or whose quotes are not in the snapshot is
rejected and retried once with the error fed back; a second failure
raises :class:`JudgeFailure` so the item lands in the review queue.
"""
from __future__ import annotations

import json
import logging
import re
from importlib import resources
from pathlib import Path

from .evidence import evidence_violations
from .rubrics import MODEL_LABELS, coerce_label

log = logging.getLogger(__name__)

_PLACEHOLDER = re.compile(r"\{(query|snapshot|dataset_name)\}")


class JudgeFailure(RuntimeError):
    pass


def load_template(dimension: str, directory: str | Path | None = None) -> str:
    if directory is not None:
        return (Path(directory) / f"{dimension}.txt").read_text(encoding="utf-8")
    return resources.files(__package__).joinpath("templates", f"{dimension}.txt").read_text(encoding="utf-8")


def render(template: str, query: str, snapshot: str, dataset_name: str) -> str:
    values = {"query": query, "snapshot": snapshot, "dataset_name": dataset_name}
    # only the three named placeholders are substituted; JSON braces in the template stay literal
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


def _extract_json(text: str) -> dict:
    text = text.strip()
    if text.startswith("```"):
        text = re.sub(r"^```\w*\s*|\s*```$", "", text)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        start, end = text.find("{"), text.rfind("}")
        if start < 0 or end <= start:
            raise ValueError("no JSON object in model output")
        obj = json.loads(text[start : end + 1])
    if not isinstance(obj, dict):
        raise ValueError("model output is not a JSON object")
    return obj


def parse_output(dimension: str, text: str, snapshot: str):
    """Validate one model answer; raises ValueError describing the first problem."""
    try:
        obj = _extract_json(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON: {exc.msg}") from exc
    for key in ("reasoning", "evidence", "label"):
        if key not in obj:
            raise ValueError(f"missing key {key!r}")
    if not isinstance(obj["reasoning"], str):
        raise ValueError("reasoning must be a string")
    evidence = obj["evidence"]
    if not isinstance(evidence, list) or not evidence or not all(isinstance(q, str) for q in evidence):
        raise ValueError("evidence must be a non-empty list of strings")
    label = coerce_label(dimension, obj["label"])
    if label not in MODEL_LABELS[dimension]:
        allowed = ", ".join(map(str, MODEL_LABELS[dimension]))
        raise ValueError(f"label {label!r} not allowed here; choose one of {allowed}")
    bad = evidence_violations(evidence, snapshot)
    if bad:
        raise ValueError(f"evidence not found verbatim in the snapshot: {bad[0]!r}")
    return label, list(evidence), obj["reasoning"]


class LLMJudgeBackend:
    def __init__(self, client, templates: dict[str, str] | None = None, template_dir=None):
        self.client = client
        self.templates = templates or {}
        self.template_dir = template_dir
        model = getattr(client, "model", None) or "llm"
        self.backend_id = f"llm:{model}"

    def _template(self, dimension: str) -> str:
        if dimension not in self.templates:
            self.templates[dimension] = load_template(dimension, self.template_dir)
        return self.templates[dimension]

    def judge(self, dimension: str, query: str, markdown: str, dataset_name: str = ""):
        prompt = render(self._template(dimension), query, markdown, dataset_name)
        error = None
        for attempt in range(2):
            text = self.client.complete(prompt if error is None else (
                prompt + "\n\nYour previous answer was rejected: " + error
                + "\nAnswer again with only the JSON object."
            ), temperature=0.0)
            try:
                return parse_output(dimension, text, markdown)
            except ValueError as exc:
                error = str(exc)
                log.warning("judge output rejected (%s, attempt %d): %s", dimension, attempt + 1, error)
        raise JudgeFailure(f"{dimension}: model output rejected twice: {error}")
