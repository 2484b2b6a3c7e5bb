from __future__ import annotations

import re
from typing import Iterable

_WS = re.compile(r"\s+")


def collapse_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


def evidence_violations(quotes: Iterable[str], snapshot_text: str) -> list[str]:
    """Quotes that are not verbatim (modulo whitespace runs) in the snapshot."""
    haystack = collapse_ws(snapshot_text)
    bad = []
    for q in quotes:
        needle = collapse_ws(q)
        if not needle or needle not in haystack:
            bad.append(q)
    return bad


def validate_evidence(judgment, snapshot) -> list[str]:
    """Violation messages for ``judgment``'s quotes against ``snapshot``.

    ``snapshot`` may be a :class:`~fairretrieval.snapshots.Snapshot` or
    plain Markdown text.
    """
    text = snapshot if isinstance(snapshot, str) else snapshot.markdown
    return [f"quote not found in snapshot: {q!r}" for q in evidence_violations(judgment.evidence, text)]
