"""Comparison metrics: label distributions, FAIR precision and density,
significance tests and linear-weighted Cohen's kappa.

Percentages are computed at full precision and displayed at one
decimal. Relative deltas are taken between the *displayed* percentages,
which is the convention the published comparison figures follow.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Hashable, Iterable, Mapping, Sequence

from . import _accel
from .judge.rubrics import (
    DATA_EXPLORER,
    DATA_NARRATIVE,
    DATA_REGISTRY,
    DISCOVERY_PORTAL,
    NO_DATA,
    RAW_DATA,
    UNREACHABLE,
)


class UndefinedMetricError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


def round_half_up(x: float, digits: int = 1) -> float:
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(x)).quantize(q, rounding=ROUND_HALF_UP))


def percent(count: int, total: int) -> float:
    """Unrounded percentage."""
    if total <= 0:
        raise UndefinedMetricError("percentage of an empty total")
    return 100.0 * count / total


def display_percent(count: int, total: int) -> float:
    return round_half_up(percent(count, total), 1)


def relative_delta(subject_pct: float, reference_pct: float) -> float | None:
    """Relative change in percent between two displayed (one-decimal) percentages."""
    a, b = round_half_up(subject_pct, 1), round_half_up(reference_pct, 1)
    if b == 0:
        return None
    return round_half_up(100.0 * (a - b) / b, 1)


# --- FAIR composite -------------------------------------------------------

@dataclass(frozen=True)
class FairVerdict:
    compliant: bool
    relevance: int
    accessibility: int
    page_type: str


def fair_verdict(relevance: int, accessibility: int, page_type: str) -> FairVerdict:
    ok = relevance == 2 and accessibility == 6 and page_type == DATA_REGISTRY
    return FairVerdict(ok, relevance, accessibility, page_type)


def _compliant_count(records: Iterable) -> tuple[int, int]:
    n = hits = 0
    for r in records:
        n += 1
        verdict = r if isinstance(r, FairVerdict) else fair_verdict(*r)
        hits += verdict.compliant
    return hits, n


# --- precision and significance ------------------------------------------

@dataclass(frozen=True)
class ZTest:
    z: float
    p_value: float


@dataclass(frozen=True)
class PrecisionReport:
    compliant_count: int
    total_count: int
    precision: float

    @property
    def display(self) -> float:
        return round_half_up(100.0 * self.precision, 1)


def precision_report(compliant: int, total: int) -> PrecisionReport:
    if total <= 0:
        raise UndefinedMetricError("precision over zero retrievals")
    return PrecisionReport(compliant, total, compliant / total)


def two_proportion_ztest(x1: int, n1: int, x2: int, n2: int) -> ZTest:
    """Two-sided pooled z-test for p2 - p1."""
    if n1 <= 0 or n2 <= 0:
        raise UndefinedMetricError("z-test needs non-empty samples")
    p1, p2 = x1 / n1, x2 / n2
    pooled = (x1 + x2) / (n1 + n2)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    if se == 0.0:
        return ZTest(0.0, 1.0)
    z = (p2 - p1) / se
    return ZTest(z, math.erfc(abs(z) / math.sqrt(2.0)))


@dataclass(frozen=True)
class PrecisionComparison:
    reference: PrecisionReport
    subject: PrecisionReport
    relative_improvement: float | None  # percent, subject over reference
    significance: ZTest


def dataset_precision(records_a: Iterable, records_b: Iterable) -> PrecisionComparison:
    """FAIR precision of two systems; ``a`` is the reference (e.g. the baseline).

    Records are :class:`FairVerdict` objects or ``(relevance, accessibility,
    page_type)`` triples, one per retrieved URL.
    """
    ca, na = _compliant_count(records_a)
    cb, nb = _compliant_count(records_b)
    ra, rb = precision_report(ca, na), precision_report(cb, nb)
    return PrecisionComparison(
        ra, rb, relative_delta(100.0 * rb.precision, 100.0 * ra.precision),
        two_proportion_ztest(ca, na, cb, nb),
    )


# --- density --------------------------------------------------------------

@dataclass(frozen=True)
class DensityReport:
    compliant_count: int
    answered_queries: int
    cap: int
    density: float
    utilization: float

    @property
    def display_density(self) -> float:
        return round_half_up(self.density, 2)

    @property
    def display_utilization(self) -> float:
        return round_half_up(100.0 * self.utilization, 1)


def result_density(compliant: int | Iterable, answered: int, cap: int = 3) -> DensityReport:
    """FAIR-compliant retrievals per answered query; ``compliant`` may be a count or records."""
    if not isinstance(compliant, int):
        compliant, _ = _compliant_count(compliant)
    if answered <= 0:
        raise UndefinedMetricError("density over zero answered queries")
    if compliant > cap * answered:
        raise ValueError("more compliant retrievals than result slots")
    density = compliant / answered
    return DensityReport(compliant, answered, cap, density, density / cap)


def density_significance(counts_a: Sequence[int], counts_b: Sequence[int]) -> float:
    """Two-sided Mann-Whitney U p-value on per-query compliant counts."""
    from scipy.stats import mannwhitneyu

    if len(counts_a) < 2 or len(counts_b) < 2:
        raise InsufficientDataError("need at least two answered queries per system")
    if len(set(counts_a) | set(counts_b)) == 1:
        return 1.0  # all values tied: no evidence of a difference
    return float(mannwhitneyu(counts_a, counts_b, alternative="two-sided").pvalue)


# --- distributions --------------------------------------------------------

@dataclass(frozen=True)
class DistributionRow:
    label: Hashable
    count: int
    percent: float
    comparison_count: int
    comparison_percent: float
    relative_delta: float | None


def distribution_report(
    labels: Sequence, comparison: Sequence, categories: Sequence | None = None
) -> list[DistributionRow]:
    """Per-label counts and percentages of ``labels`` against ``comparison``.

    Denominators are all retrievals of each system, unreachable ones included.
    """
    if not labels or not comparison:
        raise UndefinedMetricError("distribution of an empty label list")
    ca, cb = Counter(labels), Counter(comparison)
    cats = list(categories) if categories is not None else sorted(set(ca) | set(cb), key=str)
    rows = []
    for cat in cats:
        pa, pb = percent(ca[cat], len(labels)), percent(cb[cat], len(comparison))
        rows.append(DistributionRow(
            cat, ca[cat], round_half_up(pa, 1), cb[cat], round_half_up(pb, 1), relative_delta(pa, pb)
        ))
    return rows


# --- ordinal scales and kappa ---------------------------------------------

RELEVANCE_SCALE = (0, 1, 2)
ACCESSIBILITY_SCALE = (2, 3, 4, 5, 6)
UTILITY_SCALE = {
    NO_DATA: 0,
    DISCOVERY_PORTAL: 1,
    DATA_NARRATIVE: 2,
    DATA_EXPLORER: 3,
    RAW_DATA: 4,
    DATA_REGISTRY: 5,
}
PAGE_TYPE_SCALE = tuple(sorted(UTILITY_SCALE, key=UTILITY_SCALE.get))


def utility_labels(page_types: Iterable[str], scale: Mapping[str, int] = UTILITY_SCALE) -> list[int | None]:
    """Ordinal utility per page type; ``None`` marks excluded (non-ordinal) labels."""
    out = []
    for pt in page_types:
        if pt == UNREACHABLE:
            out.append(None)
        elif pt in scale:
            out.append(scale[pt])
        else:
            raise ValueError(f"page type {pt!r} missing from the utility scale")
    return out


@dataclass(frozen=True)
class KappaReport:
    kappa: float
    observed_disagreement: float
    expected_disagreement: float
    weight_matrix: tuple[tuple[float, ...], ...]
    n: int
    dropped: int = 0


def weight_matrix(k: int, weighting: str = "linear") -> list[list[float]]:
    if k < 2:
        raise ValueError("a scale needs at least two categories")
    if weighting == "linear":
        return [[abs(i - j) / (k - 1) for j in range(k)] for i in range(k)]
    if weighting == "quadratic":
        return [[((i - j) / (k - 1)) ** 2 for j in range(k)] for i in range(k)]
    raise ValueError(f"unknown weighting {weighting!r}")


def weighted_kappa(
    labels_a: Sequence, labels_b: Sequence, scale: Sequence, weighting: str = "linear",
    kernel: str | None = None,
) -> KappaReport:
    """Weighted Cohen's kappa of two raters over an ordered ``scale``.

    Pairs where either label is outside the scale (e.g. UNREACHABLE) are
    dropped before computing.
    """
    if len(labels_a) != len(labels_b):
        raise ValueError("rater label lists differ in length")
    pos = {lab: i for i, lab in enumerate(scale)}
    a, b = [], []
    for x, y in zip(labels_a, labels_b):
        if x in pos and y in pos:
            a.append(pos[x])
            b.append(pos[y])
    dropped = len(labels_a) - len(a)
    if not a:
        raise InsufficientDataError("no ordinal label pairs left to compare")
    k = len(scale)
    w = weight_matrix(k, weighting)
    flat = [v for row in w for v in row]
    observed, expected = _accel.weighted_disagreement(a, b, flat, k, backend=kernel)
    if expected == 0.0:
        if observed == 0.0:
            kappa = 1.0
        else:
            raise UndefinedMetricError("kappa undefined: no expected disagreement")
    else:
        kappa = 1.0 - observed / expected
    return KappaReport(kappa, observed, expected, tuple(tuple(r) for r in w), len(a), dropped)
