"""Pure-Python reference kernels.

These mirror ``_speedups.pyx`` operation for operation so both paths
produce bit-identical floats. Keep the arithmetic order in sync when
editing either file.
"""
from __future__ import annotations

from typing import MutableSequence, Sequence


def bm25_accumulate(
    scores: MutableSequence[float],
    doc_ids: Sequence[int],
    tfs: Sequence[float],
    doc_lens: Sequence[float],
    idf: float,
    k1: float,
    b: float,
    avgdl: float,
) -> None:
    """Add one term's BM25 contribution to ``scores`` in place."""
    kp1 = k1 + 1.0
    for i in range(len(doc_ids)):
        d = doc_ids[i]
        tf = tfs[i]
        norm = k1 * ((1.0 - b) + ((b * doc_lens[d]) / avgdl))
        scores[d] += (idf * (tf * kp1)) / (tf + norm)


def weighted_disagreement(
    a: Sequence[int], b: Sequence[int], weights: Sequence[float], k: int
) -> tuple[float, float]:
    """Observed and chance-expected weighted disagreement of two raters.

    ``a`` and ``b`` hold category indices in ``[0, k)``; ``weights`` is the
    row-major ``k*k`` disagreement matrix.
    """
    n = len(a)
    counts = [0] * (k * k)
    rows = [0] * k
    cols = [0] * k
    for i in range(n):
        x = a[i]
        y = b[i]
        counts[x * k + y] += 1
        rows[x] += 1
        cols[y] += 1
    observed = 0.0
    expected = 0.0
    for i in range(k):
        for j in range(k):
            w = weights[i * k + j]
            observed += w * float(counts[i * k + j])
            expected += w * float(rows[i] * cols[j])
    return observed / float(n), expected / (float(n) * float(n))
