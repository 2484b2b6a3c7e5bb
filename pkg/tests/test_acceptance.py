"""Exit criteria for the harness, one group per criterion.

Run ``pytest tests/test_acceptance.py`` to get a one-line pass/fail
summary per criterion at the end of the session.
"""
from __future__ import annotations

import json
import random
import string
import time
from datetime import date, timedelta
from fractions import Fraction
from pathlib import Path

import httpx
import pytest

from conftest import EXTRACT, WORLD
from fairretrieval import _accel, metrics
from fairretrieval.agents import (
    ANSWERED,
    BASELINE,
    SEMANTIC,
    SENTINEL,
    AgentConfig,
    run_agent,
    verify_grounding,
)
from fairretrieval.backends import BackendResult, FixtureBackend, IndexBackend
from fairretrieval.extract import ValidityRules, extract_dataset_markup, harvest, normalize, validate
from fairretrieval.index import (
    DATA_TYPES,
    LICENSE_CLASSES,
    FacetConstraints,
    build_index,
    classify_data_type,
    classify_license,
    tokenize,
)
from fairretrieval.judge import HeuristicBackend, JudgeFailure, judge_all, judge_relevance, validate_evidence
from fairretrieval.judge.rubrics import DATA_REGISTRY, Judgment, NO_DATA
from fairretrieval.pipeline import RunConfig, run_hybrid, run_pipeline
from fairretrieval.queries import Query, load_queries
from fairretrieval.records import DatasetMetadata, Distribution
from fairretrieval.snapshots import OK, FetchPolicy, FixtureTransport, SnapshotStore, fetch, page_markdown

# Aggregate counts reported for the two systems: baseline (web search) and semantic (metadata index).
BASE_TOTAL, SEM_TOTAL = 164, 112
BASE_COMPLIANT, SEM_COMPLIANT = 46, 52
BASE_ANSWERED, SEM_ANSWERED = 56, 40
BASE_REL2, SEM_REL2 = 99, 68


def _verdicts(compliant: int, total: int) -> list[tuple]:
    return [(2, 6, DATA_REGISTRY)] * compliant + [(0, 2, NO_DATA)] * (total - compliant)


# --- 1 ---------------------------------------------------------------------

@pytest.mark.acceptance(1)
def test_arithmetic_figures():
    start = time.perf_counter()
    cmp_ = metrics.dataset_precision(_verdicts(BASE_COMPLIANT, BASE_TOTAL), _verdicts(SEM_COMPLIANT, SEM_TOTAL))
    assert cmp_.reference.display == 28.0
    assert cmp_.subject.display == 46.4
    assert cmp_.relative_improvement == 65.7

    sem = metrics.result_density(SEM_COMPLIANT, SEM_ANSWERED)
    base = metrics.result_density(BASE_COMPLIANT, BASE_ANSWERED)
    assert f"{sem.display_density:.2f}" == "1.30"
    assert f"{base.display_density:.2f}" == "0.82"
    assert sem.display_utilization == 43.3
    assert base.display_utilization == 27.4

    assert metrics.display_percent(BASE_REL2, BASE_TOTAL) == 60.4
    assert metrics.display_percent(SEM_REL2, SEM_TOTAL) == 60.7
    assert time.perf_counter() - start < 1.0


# --- 2 ---------------------------------------------------------------------

@pytest.mark.acceptance(2)
def test_precision_significance():
    start = time.perf_counter()
    t = metrics.two_proportion_ztest(BASE_COMPLIANT, BASE_TOTAL, SEM_COMPLIANT, SEM_TOTAL)
    assert t.p_value < 0.01
    assert abs(t.z - 3.13) <= 0.01
    cmp_ = metrics.dataset_precision(_verdicts(BASE_COMPLIANT, BASE_TOTAL), _verdicts(SEM_COMPLIANT, SEM_TOTAL))
    assert cmp_.significance == t
    assert time.perf_counter() - start < 1.0


# --- 3 ---------------------------------------------------------------------

def _row(rows, label):
    return next(r for r in rows if r.label == label)


# The counts below are back-derived (inferred) from one-decimal percentages: round(0.714 * 112) = 80,
# round(0.487 * 164) = 80, and likewise 99/112 and 100/164 for the registry share.

@pytest.mark.acceptance(3)
@pytest.mark.xfail(strict=True, reason=(
    "80/112 vs 80/164 displays as 71.4% vs 48.8%; the delta is 46.3 from displayed values and 46.4 "
    "from exact ratios. 46.6 needs a 48.7% reference, which no integer count over 164 produces."
))
def test_relative_delta_machine_readable():
    rows = metrics.distribution_report([6] * 80 + [2] * 32, [6] * 80 + [2] * 84, metrics.ACCESSIBILITY_SCALE)
    row = _row(rows, 6)
    assert (row.percent, row.comparison_percent) == (71.4, 48.8)
    assert row.relative_delta == 46.6


@pytest.mark.acceptance(3)
def test_relative_delta_registry():
    rows = metrics.distribution_report(
        [DATA_REGISTRY] * 99 + [NO_DATA] * 13, [DATA_REGISTRY] * 100 + [NO_DATA] * 64
    )
    row = _row(rows, DATA_REGISTRY)
    assert (row.percent, row.comparison_percent) == (88.4, 61.0)
    assert row.relative_delta == 44.9


# --- 4 ---------------------------------------------------------------------

def _oracle_kappa(a, b, k):
    """Confusion-matrix kappa in exact rational arithmetic."""
    n = len(a)
    conf = [[0] * k for _ in range(k)]
    for x, y in zip(a, b):
        conf[x][y] += 1
    w = [[Fraction(abs(i - j), k - 1) for j in range(k)] for i in range(k)]
    rows = [sum(conf[i]) for i in range(k)]
    cols = [sum(conf[i][j] for i in range(k)) for j in range(k)]
    obs = sum(w[i][j] * conf[i][j] for i in range(k) for j in range(k)) / n
    exp = sum(w[i][j] * rows[i] * cols[j] for i in range(k) for j in range(k)) / (n * n)
    if exp == 0:
        return None if obs else 1.0
    return float(1 - obs / exp)


@pytest.mark.acceptance(4)
def test_kappa_identity_and_maximal_disagreement():
    for backend in _accel.available_backends():
        assert metrics.weighted_kappa([0, 1, 2, 2, 1], [0, 1, 2, 2, 1], (0, 1, 2), kernel=backend).kappa == 1.0
        assert metrics.weighted_kappa([0, 0, 2, 2], [2, 2, 0, 0], (0, 1, 2), kernel=backend).kappa == -1.0


@pytest.mark.acceptance(4)
@pytest.mark.parametrize("backend", _accel.available_backends())
def test_kappa_matches_oracle_and_is_symmetric(backend):
    rng = random.Random(2024)
    checked = 0
    for _ in range(1000):
        k = rng.choice((3, 6))
        n = rng.randint(5, 200)
        scale = tuple(range(k))
        a = [rng.randrange(k) for _ in range(n)]
        b = [rng.randrange(k) for _ in range(n)]
        want = _oracle_kappa(a, b, k)
        if want is None:
            with pytest.raises(metrics.UndefinedMetricError):
                metrics.weighted_kappa(a, b, scale, kernel=backend)
            continue
        got = metrics.weighted_kappa(a, b, scale, kernel=backend).kappa
        assert abs(got - want) <= 1e-12
        assert abs(metrics.weighted_kappa(b, a, scale, kernel=backend).kappa - got) <= 1e-12
        checked += 1
    assert checked >= 990


# --- 5 ---------------------------------------------------------------------

def _fixture_labels():
    return json.loads((WORLD / "labels.json").read_text())


@pytest.mark.acceptance(5)
def test_fixture_corpus_size():
    pages = json.loads((WORLD / "pages.json").read_text())
    html = {spec["file"] for spec in pages.values()
            if spec.get("file", "").endswith(".html") and spec.get("status", 200) == 200}
    assert len(html) >= 20
    assert len(_fixture_labels()["labels"]) >= 20


@pytest.mark.acceptance(5)
def test_heuristic_matches_fixture_labels():
    data = _fixture_labels()
    client = httpx.Client(transport=FixtureTransport.from_manifest(WORLD / "pages.json"))
    backend = HeuristicBackend()
    mismatches = []
    for e in data["labels"]:
        outcome = fetch(e["url"], FetchPolicy(), client)
        md = page_markdown(outcome) if outcome.status == OK else None
        if isinstance(md, str) and not md.strip():
            md = "(empty page)\n"
        got = judge_all(data["queries"][e["query_id"]], md, "", backend, outcome.status)
        labels = (got["relevance"].label, got["accessibility"].label, got["page_type"].label)
        if labels != (e["relevance"], e["accessibility"], e["page_type"]):
            mismatches.append((e["query_id"], e["url"], labels))
    assert mismatches == []


def _report_bytes(run_dir: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted((run_dir / "report").iterdir())}


def _run_world(root: Path, threads: int) -> RunConfig:
    ini = root / "run.ini"
    ini.write_text(ini.read_text().replace("threads = 4", f"threads = {threads}"))
    cfg = RunConfig.from_file(ini)
    run_pipeline(cfg)
    return cfg


@pytest.mark.acceptance(5)
def test_pipeline_report_is_deterministic(world, tmp_path):
    import shutil

    cfg = _run_world(world, 4)
    first = _report_bytes(cfg.run_dir)
    assert set(first) == {"labels.csv", "report.json", "report.md"}
    run_pipeline(cfg)
    assert _report_bytes(cfg.run_dir) == first

    for threads in (1, 8):
        other = tmp_path / f"threads{threads}"
        shutil.copytree(WORLD, other, ignore=shutil.ignore_patterns("out"))
        assert _report_bytes(_run_world(other, threads).run_dir) == first


@pytest.mark.acceptance(5)
def test_pipeline_labels_agree_with_fixture_truth(world):
    import csv

    cfg = _run_world(world, 4)
    truth = {(e["query_id"], e["url"]): e for e in _fixture_labels()["labels"]}
    rows = list(csv.DictReader((cfg.run_dir / "report" / "labels.csv").open()))
    assert rows
    matched = 0
    for row in rows:
        e = truth.get((row["query_id"], row["url"]))
        if e is None:
            continue
        matched += 1
        assert (int(row["relevance"]), int(row["accessibility"]), row["page_type"]) == (
            e["relevance"], e["accessibility"], e["page_type"]), row
    assert matched == len(rows)


# --- 6 ---------------------------------------------------------------------

class _QuoteBackend:
    backend_id = "quote-fixed"

    def __init__(self, quote: str, label):
        self.quote, self.label = quote, label

    def judge(self, dimension, query, markdown, dataset_name=""):
        return self.label, [self.quote], "fixed"


def _accepted(world_root: Path):
    cfg = _run_world(world_root, 4)
    store = SnapshotStore(cfg.snapshot_dir)
    rows = [json.loads(line) for line in
            (cfg.run_dir / "judgments" / "judgments.ndjson").read_text().splitlines() if line]
    return store, rows


@pytest.mark.acceptance(6)
def test_accepted_judgments_are_grounded(world):
    store, rows = _accepted(world)
    reachable = [r for r in rows if r["snapshot_id"]]
    assert reachable
    for row in reachable:
        j = Judgment.from_dict(row)
        assert j.evidence
        assert validate_evidence(j, store.read(row["snapshot_id"])) == []


@pytest.mark.acceptance(6)
def test_one_character_mutations_are_rejected(world):
    store, rows = _accepted(world)
    pool = [(q, row) for row in rows if row["snapshot_id"] for q in row["evidence"]
            if any(not c.isspace() for c in q)]
    rng = random.Random(6)
    alphabet = string.ascii_letters + string.digits + "#@~^§¤¶Ωж"
    rejected = 0
    for _ in range(500):
        quote, row = rng.choice(pool)
        snap = store.read(row["snapshot_id"])
        spots = [i for i, c in enumerate(quote) if not c.isspace()]
        i = rng.choice(spots)
        fresh = [c for c in alphabet if c not in snap.markdown]
        mutated = quote[:i] + rng.choice(fresh) + quote[i + 1:]
        j = Judgment(row["dimension"], row["label"], (mutated,), "mutated", "fuzz")
        violations = validate_evidence(j, snap)
        with pytest.raises(JudgeFailure):
            judge_relevance("q", snap, "", _QuoteBackend(mutated, 1))
        rejected += bool(violations)
    assert rejected == 500


# --- 7 ---------------------------------------------------------------------

def _world_backends():
    from fairretrieval.pipeline import open_index

    baseline = FixtureBackend.from_file(WORLD / "baseline.json")
    semantic = IndexBackend(open_index(WORLD / "records.ndjson"))
    return {BASELINE: baseline, SEMANTIC: semantic}


class _HallucinatingLLM:
    """Selects every tool result plus URLs it made up."""

    def complete(self, prompt, *, temperature=0.0):
        if "Search results:" not in prompt:
            return "keywords only"
        urls = [line.split("url: ", 1)[1] for line in prompt.splitlines() if line.strip().startswith("url: ")]
        picks = [{"name": "made up", "url": "https://invented.example/x"}]
        picks += [{"name": f"pick {i}", "url": u} for i, u in enumerate(urls)]
        return json.dumps(picks * 2)


def _check_wire(response: str) -> list[dict]:
    if response == SENTINEL:
        return []
    data = json.loads(response)
    assert isinstance(data, list) and 1 <= len(data) <= 3
    for item in data:
        assert list(item) == ["name", "url"]
        assert isinstance(item["name"], str) and isinstance(item["url"], str)
    return data


@pytest.mark.acceptance(7)
@pytest.mark.parametrize("use_llm", [False, True])
def test_agent_wire_contract(use_llm):
    queries = load_queries(WORLD / "queries.tsv")
    llm = _HallucinatingLLM() if use_llm else None
    violations = 0
    answered = 0
    for strategy, backend in _world_backends().items():
        for q in queries:
            run = run_agent(AgentConfig(strategy), q, backend, llm)
            data = _check_wire(run.response())
            assert [r.rank for r in run.retrievals] == list(range(1, len(data) + 1))
            violations += len(verify_grounding(run.response(), run.tool_log))
            answered += run.status == ANSWERED
    assert violations == 0
    assert answered > 0


@pytest.mark.acceptance(7)
def test_empty_backend_returns_exact_sentinel():
    q = Query("q1", "anything at all", "en", "natural_language")
    for strategy in (BASELINE, SEMANTIC):
        run = run_agent(AgentConfig(strategy), q, FixtureBackend({}))
        assert run.response().encode("utf-8") == b"No relevant datasets found."
        failing = run_agent(AgentConfig(strategy), q, FixtureBackend({}, fail=True))
        assert failing.response().encode("utf-8") == b"No relevant datasets found."


# --- 8 ---------------------------------------------------------------------

_WORDS = ("air quality water river traffic crash school budget census income housing rent transit bus "
          "bridge inspection tree canopy parcel zoning crime permit energy solar rainfall flood").split()
_LICENSES = ("CC-BY-4.0", "https://creativecommons.org/licenses/by-nc/4.0/", "Public Domain", "MIT",
             "CC BY-NC-SA 3.0", None, "All rights reserved", "ODbL")
_FORMATS = (("text/csv", "a.csv"), ("application/geo+json", "b.geojson"), ("image/png", "c.png"),
            ("text/plain", "d.txt"), ("application/zip", "e.zip"), ("", None))


def _corpus(n=200, seed=8):
    rng = random.Random(seed)
    ref = date(2025, 6, 30)
    recs = []
    for i in range(n):
        fmt, fname = rng.choice(_FORMATS)
        dists = (Distribution(fmt, f"https://data.example.org/{i}/{fname}") if fname else Distribution(fmt or "csv"),)
        recs.append(DatasetMetadata(
            name=" ".join(rng.sample(_WORDS, rng.randint(1, 3))).title(),
            landing_url=f"https://data.example.org/datasets/{i:03d}",
            description=" ".join(rng.choice(_WORDS) for _ in range(rng.randint(0, 12))),
            license=rng.choice(_LICENSES),
            date_modified=ref - timedelta(days=rng.randint(0, 2000)) if rng.random() < 0.85 else None,
            keywords=tuple(rng.sample(_WORDS, rng.randint(0, 2))),
            distributions=dists if rng.random() < 0.9 else (),
        ))
    return recs, ref


def _oracle(records, keywords, facets):
    terms = set(tokenize(keywords))
    out = set()
    for r in records:
        text = set(tokenize(r.name)) | set(tokenize(r.description)) | {t for k in r.keywords for t in tokenize(k)}
        if not terms & text:
            continue
        if facets.license_class is not None and classify_license(r.license) != facets.license_class:
            continue
        if facets.data_type is not None and classify_data_type(r) != facets.data_type:
            continue
        if facets.last_updated_within is not None:
            if r.date_modified is None or (facets.reference_date - r.date_modified).days > facets.last_updated_within:
                continue
        out.add(r.landing_url)
    return out


@pytest.mark.acceptance(8)
def test_faceted_search_equals_oracle():
    records, ref = _corpus()
    index = build_index(records)
    queries = ["air quality", "bridge inspection", "census income housing", "flood", "solar energy budget"]
    combos = 0
    for lic in (None,) + LICENSE_CLASSES:
        for dtype in (None,) + DATA_TYPES:
            for window in (None, 30, 365, 1000):
                facets = FacetConstraints(ref, lic, dtype, window)
                for kw in queries:
                    want = _oracle(records, kw, facets)
                    hits = index.search(kw, facets, limit=len(records))
                    assert {h.record.landing_url for h in hits} == want, (lic, dtype, window, kw)
                    keys = [(-h.score, h.record.landing_url) for h in hits]
                    assert keys == sorted(keys)
                    again = [(h.record.landing_url, h.score) for h in index.search(kw, facets, len(records))]
                    assert again == [(h.record.landing_url, h.score) for h in hits]
                    top = index.search(kw, facets, limit=3)
                    assert [h.record.landing_url for h in top] == [h.record.landing_url for h in hits[:3]]
                    for backend in _accel.available_backends():
                        other = index.search(kw, facets, len(records), kernel=backend)
                        assert [(h.record.landing_url, h.score) for h in other] == again
                combos += 1
    assert combos == 4 * 6 * 4


# --- 9 ---------------------------------------------------------------------

@pytest.mark.acceptance(9)
@pytest.mark.parametrize("name", ["graph.html", "microdata.html"])
def test_extraction_fixtures(name):
    expected = json.loads((EXTRACT / "expected.json").read_text())[name]
    res = harvest([(expected["source_url"], (EXTRACT / name).read_text())])
    assert [r.to_dict() for r in res.records] == [
        DatasetMetadata.from_dict(r).to_dict() for r in expected["records"]
    ]
    assert res.diagnostics.counts == expected["diagnostics"]


@pytest.mark.acceptance(9)
def test_extraction_round_trip_through_jsonld():
    expected = json.loads((EXTRACT / "expected.json").read_text())
    for entry in expected.values():
        for raw in entry["records"]:
            rec = DatasetMetadata.from_dict(raw)
            html = ('<html><head><script type="application/ld+json">'
                    + json.dumps(rec.to_jsonld()) + "</script></head><body></body></html>")
            blocks = extract_dataset_markup(html, rec.landing_url)
            assert len(blocks) == 1
            assert normalize(blocks[0]) == rec


@pytest.mark.acceptance(9)
def test_validity_partition():
    cases = json.loads((EXTRACT / "validity.json").read_text())
    assert len(cases) == 10
    verdicts = []
    for case in cases:
        raw = dict(case["record"])
        raw.setdefault("description", "")
        v = validate(DatasetMetadata.from_dict(raw), ValidityRules())
        assert (v.valid, list(v.reasons)) == (case["valid"], case["reasons"]), case["record"]["name"]
        verdicts.append(v.valid)
    assert sum(verdicts) == 2


# --- 10 --------------------------------------------------------------------

def _random_backend(rng: random.Random, tag: str) -> FixtureBackend:
    mode = rng.choice(("empty", "results", "fail"))
    if mode == "fail":
        return FixtureBackend({}, backend_id=tag, fail=True)
    if mode == "empty":
        return FixtureBackend({}, backend_id=tag)
    rows = [BackendResult(f"https://{tag}.example/{i}", f"{tag} {i}") for i in range(rng.randint(1, 6))]
    return FixtureBackend({"*": rows}, backend_id=tag)


@pytest.mark.acceptance(10)
def test_hybrid_invokes_baseline_iff_semantic_sentinel():
    rng = random.Random(10)
    violations = 0
    for trial in range(1000):
        sem, base = _random_backend(rng, "sem"), _random_backend(rng, "web")
        q = Query(f"q{trial}", rng.choice(("air quality", "bus ridership in boston", "crime 2015")), "en", "keyword")
        res = run_hybrid(q, sem, base)
        sentinel = res.semantic.response() == SENTINEL
        invoked = bool(base.calls)
        if invoked != sentinel:
            violations += 1
        if sentinel:
            ok = res.source in ("baseline_fallback", "exhausted") and res.response() == res.baseline.response()
        else:
            ok = res.source == "semantic" and res.response() == res.semantic.response()
        violations += not ok
        if verify_grounding(res.run, res.run.tool_log):
            violations += 1
    assert violations == 0
