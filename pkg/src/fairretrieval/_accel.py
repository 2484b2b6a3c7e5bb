"""Kernel selection: compiled extension when importable, else pure Python.

Set ``FAIRRETRIEVAL_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and by tests that compare both paths).
"""
from __future__ import annotations

import array
import os
from types import ModuleType
from typing import Sequence

from . import _kernels

_compiled: ModuleType | None
try:
    from . import _speedups as _compiled  # type: ignore[attr-defined]
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("FAIRRETRIEVAL_PURE_PYTHON"):
    BACKEND = "cython"
    _impl: ModuleType = _compiled
else:
    BACKEND = "python"
    _impl = _kernels


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])


def _module(backend: str | None) -> ModuleType:
    if backend is None:
        return _impl
    if backend == "python":
        return _kernels
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {backend!r}")


def bm25_accumulate(
    scores: array.array,
    doc_ids: array.array,
    tfs: array.array,
    doc_lens: array.array,
    idf: float,
    k1: float,
    b: float,
    avgdl: float,
    backend: str | None = None,
) -> None:
    """``scores`` is an ``array('d')``; ``doc_ids`` an ``array('i')``."""
    _module(backend).bm25_accumulate(scores, doc_ids, tfs, doc_lens, idf, k1, b, avgdl)


def weighted_disagreement(
    a: Sequence[int],
    b: Sequence[int],
    weights: Sequence[float],
    k: int,
    backend: str | None = None,
) -> tuple[float, float]:
    mod = _module(backend)
    if mod is _kernels:
        return mod.weighted_disagreement(a, b, weights, k)
    return mod.weighted_disagreement(
        array.array("l", a), array.array("l", b), array.array("d", weights), k
    )
