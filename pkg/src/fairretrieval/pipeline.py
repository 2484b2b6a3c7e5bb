"""End-to-end experiment driver.

Stages run in order and talk only through files under the run
directory, so any stage can be re-run in place::

    queries/    canonical query TSV
    toollogs/   per-strategy agent runs and the raw tool results
    snapshots/  frozen Markdown (or wherever ``snapshot_dir`` points)
    judgments/  one NDJSON line per (retrieval, dimension)
    review/     the human review queue
    report/     report.json, report.md, labels.csv, autorater.json

The configuration is an INI file with a ``[run]`` section and a
``[backends]`` section; relative paths resolve against the file's
directory. Secrets (LLM credentials) come only from the environment.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import random
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx

from . import metrics
from .agents import (
    ANSWERED,
    BASELINE,
    ERRORED,
    FALLBACK,
    SEMANTIC,
    AgentConfig,
    AgentRun,
    HandoffQueue,
    Retrieval,
    detect_blocker,
    run_agent,
    utc_timestamp,
)
from .backends import SearchBackend, backend_from_spec
from .index import DATA_TYPES, LICENSE_CLASSES, FacetConstraints, Index, build_index, load_index
from .judge import (
    ACCESSIBILITY,
    DIMENSIONS,
    PAGE_TYPE,
    PAGE_TYPES,
    RELEVANCE,
    HeuristicBackend,
    Judgment,
    JudgeFailure,
    LLMJudgeBackend,
    judge_all,
)
from .judge.rubrics import ACCESSIBILITY_LEVELS, RELEVANCE_LABELS
from .queries import Query, load_queries, write_queries
from .records import read_ndjson
from .review import GOLD_SAMPLE, JUDGE_FAILURE, UNDETERMINED_SCRAPE, ReviewQueue, sample_gold_set
from .snapshots import (
    OK,
    UNDETERMINED,
    UNREACHABLE,
    FetchPolicy,
    FixtureTransport,
    SnapshotStore,
    fetch_all,
    freeze_outcome,
)

log = logging.getLogger(__name__)

HYBRID = "hybrid"
STRATEGIES = (BASELINE, SEMANTIC, HYBRID)
SOURCE_SEMANTIC, SOURCE_BASELINE_FALLBACK, SOURCE_EXHAUSTED = "semantic", "baseline_fallback", "exhausted"
JUDGES = ("heuristic", "llm")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration (CLI exit code 2)."""


class StageError(RuntimeError):
    """A pipeline stage failed (CLI exit code 3); earlier artifacts are left intact."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage


# --- configuration --------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    queries: Path
    strategies: tuple[str, ...]
    backends: Mapping[str, str]
    run_dir: Path
    snapshot_dir: Path
    seed: int
    reference_date: date
    judge: str = "heuristic"
    pages: Path | None = None  # offline page manifest served instead of the network
    threads: int = 4
    gold_fraction: float = 0.11
    max_results: int = 3
    query_language: str | None = None
    query_style: str | None = None
    agent_llm: bool = False
    clock: str | None = None  # fixed timestamp for tool logs and fetches
    fetch_timeout: float = 20.0
    redirect_limit: int = 5
    respect_robots: bool = True
    license_class: str | None = None
    data_type: str | None = None
    last_updated_within: int | None = None

    @property
    def facets(self) -> FacetConstraints | None:
        if self.license_class is None and self.data_type is None and self.last_updated_within is None:
            return None
        return FacetConstraints(self.reference_date, self.license_class, self.data_type,
                                self.last_updated_within)

    def timestamp(self) -> Callable[[], str]:
        return (lambda: self.clock) if self.clock else utc_timestamp

    def dir(self, name: str) -> Path:
        return self.run_dir / name

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not parser.has_section("run"):
            raise ConfigError(f"{path}: missing [run] section")
        run = dict(parser["run"])
        backends = dict(parser["backends"]) if parser.has_section("backends") else {}
        return cls.from_mapping(run, backends, path.parent)

    @classmethod
    def from_mapping(cls, run: Mapping[str, str], backends: Mapping[str, str],
                     base: str | Path = ".") -> "RunConfig":
        base = Path(base)
        known = {f for f in cls.__dataclass_fields__} - {"backends"}
        unknown = sorted(set(run) - known)
        if unknown:
            raise ConfigError(f"unknown [run] keys: {', '.join(unknown)}")

        def need(key: str) -> str:
            value = (run.get(key) or "").strip()
            if not value:
                raise ConfigError(f"[run] {key} is required")
            return value

        def opt(key: str) -> str | None:
            value = (run.get(key) or "").strip()
            return value or None

        def resolve(value: str) -> Path:
            p = Path(value)
            return p if p.is_absolute() else base / p

        def parse(key: str, conv, default=None):
            value = opt(key)
            if value is None:
                return default
            try:
                return conv(value)
            except ValueError:
                raise ConfigError(f"[run] {key}: cannot parse {value!r}") from None

        def boolean(value: str) -> bool:
            v = value.lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)

        seed = parse("seed", int)
        if seed is None:
            raise ConfigError("[run] seed is required (no implicit randomness)")
        ref = parse("reference_date", date.fromisoformat)
        if ref is None:
            raise ConfigError("[run] reference_date is required")
        queries = resolve(need("queries"))
        if not queries.is_file():
            raise ConfigError(f"query file {queries} not found")
        strategies = tuple(s.strip() for s in need("strategies").split(",") if s.strip())
        bad = [s for s in strategies if s not in STRATEGIES]
        if bad or not strategies:
            raise ConfigError(f"strategies must be a subset of {', '.join(STRATEGIES)}; got {bad or 'none'}")
        needed = set()
        for s in strategies:
            needed |= {BASELINE, SEMANTIC} if s == HYBRID else {s}
        resolved = {}
        for name in sorted(needed):
            spec = (backends.get(name) or "").strip()
            if not spec:
                raise ConfigError(f"[backends] {name} is required for the configured strategies")
            resolved[name] = _resolve_backend_spec(spec, resolve)
        pages = opt("pages")
        pages_path = resolve(pages) if pages else None
        if pages_path is not None and not pages_path.is_file():
            raise ConfigError(f"page manifest {pages_path} not found")
        judge = opt("judge") or "heuristic"
        if judge not in JUDGES:
            raise ConfigError(f"[run] judge must be one of {', '.join(JUDGES)}")
        cfg = dict(
            queries=queries,
            strategies=strategies,
            backends=resolved,
            run_dir=resolve(need("run_dir")),
            snapshot_dir=resolve(need("snapshot_dir")),
            seed=seed,
            reference_date=ref,
            judge=judge,
            pages=pages_path,
            threads=parse("threads", int, 4),
            gold_fraction=parse("gold_fraction", float, 0.11),
            max_results=parse("max_results", int, 3),
            query_language=opt("query_language"),
            query_style=opt("query_style"),
            agent_llm=parse("agent_llm", boolean, False),
            clock=opt("clock"),
            fetch_timeout=parse("fetch_timeout", float, 20.0),
            redirect_limit=parse("redirect_limit", int, 5),
            respect_robots=parse("respect_robots", boolean, True),
            license_class=opt("license_class"),
            data_type=opt("data_type"),
            last_updated_within=parse("last_updated_within", int),
        )
        if cfg["threads"] < 1:
            raise ConfigError("[run] threads must be >= 1")
        if not 0.0 < cfg["gold_fraction"] < 1.0:
            raise ConfigError("[run] gold_fraction must lie strictly between 0 and 1")
        if cfg["license_class"] not in (None, *LICENSE_CLASSES):
            raise ConfigError(f"[run] license_class must be one of {', '.join(LICENSE_CLASSES)}")
        if cfg["data_type"] not in (None, *DATA_TYPES):
            raise ConfigError(f"[run] data_type must be one of {', '.join(DATA_TYPES)}")
        return cls(**cfg)


def _resolve_backend_spec(spec: str, resolve: Callable[[str], Path]) -> str:
    kind, _, arg = spec.partition(":")
    if kind in ("http", "https"):
        return spec
    if kind not in ("fixture", "index") or not arg:
        raise ConfigError(f"bad backend spec {spec!r} (fixture:<file>, index:<dir|ndjson> or a URL)")
    path = resolve(arg)
    if not path.exists():
        raise ConfigError(f"backend path {path} not found")
    return f"{kind}:{path}"


def open_index(path: str | Path) -> Index:
    """An index directory, or an NDJSON record file indexed on the fly."""
    path = Path(path)
    if path.is_dir():
        return load_index(path)
    return build_index(read_ndjson(path))


def make_backend(cfg: RunConfig, strategy: str) -> SearchBackend:
    facets = cfg.facets if strategy == SEMANTIC else None
    return backend_from_spec(cfg.backends[strategy], open_index, facets)


def make_judge_backend(cfg: RunConfig):
    if cfg.judge == "heuristic":
        return HeuristicBackend()
    from .llm import ChatCompletionsClient, LLMConfigError, RateLimitedClient

    try:
        return LLMJudgeBackend(RateLimitedClient(ChatCompletionsClient.from_env()))
    except LLMConfigError as exc:
        raise ConfigError(str(exc)) from None


# --- small file helpers ---------------------------------------------------

def _write_ndjson(path: Path, rows: Sequence[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows)
    path.write_text(text, encoding="utf-8")


def _read_ndjson(path: Path) -> list[dict]:
    if not path.exists():
        raise FileNotFoundError(f"{path} missing; run the earlier stages first")
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


# --- hybrid strategy ------------------------------------------------------

@dataclass
class HybridResult:
    source: str  # semantic | baseline_fallback | exhausted
    run: AgentRun
    semantic: AgentRun
    baseline: AgentRun | None = None

    def response(self) -> str:
        return self.run.response()

    def to_dict(self) -> dict:
        return {"source": self.source, "response": self.response(), **{
            "semantic": self.semantic.to_dict(),
            "baseline": self.baseline.to_dict() if self.baseline else None,
        }}


def run_hybrid(query: Query, semantic_backend: SearchBackend, baseline_backend: SearchBackend,
               llm=None, max_results: int = 3, clock: Callable[[], str] = utc_timestamp) -> HybridResult:
    """Semantic index first; the web-search baseline runs only if that yields the sentinel.

    An errored semantic run also answers with the sentinel, so it falls
    back too; its error stays on the semantic run for the record.
    """
    sem = run_agent(AgentConfig(SEMANTIC, max_results=max_results), query, semantic_backend, llm, clock)
    if sem.status == ANSWERED:
        return HybridResult(SOURCE_SEMANTIC, sem, sem)
    base = run_agent(AgentConfig(BASELINE, max_results=max_results), query, baseline_backend, llm, clock)
    if base.status == ANSWERED:
        return HybridResult(SOURCE_BASELINE_FALLBACK, base, sem, base)
    return HybridResult(SOURCE_EXHAUSTED, base, sem, base)


# --- stages ---------------------------------------------------------------

def stage_ingest(cfg: RunConfig) -> list[Query]:
    queries = load_queries(cfg.queries, cfg.query_language, cfg.query_style)
    if not queries:
        raise ValueError(f"no queries left in {cfg.queries} after filtering")
    out = cfg.dir("queries")
    out.mkdir(parents=True, exist_ok=True)
    write_queries(queries, out / "queries.tsv")
    return queries


def _run_row(run: AgentRun, strategy: str, source: str | None = None) -> dict:
    row = run.to_dict()
    row["strategy"] = strategy
    row["retrievals"] = [replace(r, strategy=strategy).to_dict() for r in run.retrievals]
    if source is not None:
        row["source"] = source
    return row


def stage_run(cfg: RunConfig, llm=None, backends: Mapping[str, SearchBackend] | None = None) -> dict[str, list[dict]]:
    queries = load_queries(cfg.dir("queries") / "queries.tsv")
    if backends is None:
        names = {BASELINE, SEMANTIC} if HYBRID in cfg.strategies else set(cfg.strategies)
        backends = {name: make_backend(cfg, name) for name in sorted(names)}
    clock = cfg.timestamp()
    out: dict[str, list[dict]] = {}
    for strategy in cfg.strategies:
        runs, logs = [], []
        for q in queries:
            if strategy == HYBRID:
                res = run_hybrid(q, backends[SEMANTIC], backends[BASELINE], llm, cfg.max_results, clock)
                runs.append(_run_row(res.run, HYBRID, res.source))
                for sub in (res.semantic, res.baseline):
                    if sub is not None and sub.tool_log is not None:
                        logs.append({"strategy": sub.strategy, **sub.tool_log.to_dict()})
            else:
                agent_llm = llm if strategy == SEMANTIC else None
                run = run_agent(AgentConfig(strategy, max_results=cfg.max_results), q, backends[strategy],
                                agent_llm, clock)
                runs.append(_run_row(run, strategy))
                if run.tool_log is not None:
                    logs.append({"strategy": strategy, **run.tool_log.to_dict()})
        _write_ndjson(cfg.dir("toollogs") / f"{strategy}.runs.ndjson", runs)
        _write_ndjson(cfg.dir("toollogs") / f"{strategy}.ndjson", logs)
        out[strategy] = runs
    return out


def load_retrievals(cfg: RunConfig) -> list[Retrieval]:
    rows = []
    for strategy in cfg.strategies:
        for run in _read_ndjson(cfg.dir("toollogs") / f"{strategy}.runs.ndjson"):
            rows.extend(Retrieval.from_dict(r) for r in run["retrievals"])
    return rows


def load_runs(cfg: RunConfig) -> dict[str, list[dict]]:
    return {s: _read_ndjson(cfg.dir("toollogs") / f"{s}.runs.ndjson") for s in cfg.strategies}


def stage_snapshot(cfg: RunConfig, client: httpx.Client | None = None, refetch: bool = False) -> dict[str, dict]:
    """Fetch and freeze every retrieved URL not already frozen."""
    store = SnapshotStore(cfg.snapshot_dir)
    urls = sorted({r.url for r in load_retrievals(cfg)})
    todo = [u for u in urls if refetch or store.lookup(u) is None]
    own = client is None
    if client is None:
        transport = FixtureTransport.from_manifest(cfg.pages) if cfg.pages else None
        client = httpx.Client(transport=transport) if transport else httpx.Client()
    policy = FetchPolicy(cfg.fetch_timeout, cfg.redirect_limit, respect_robots=cfg.respect_robots)
    try:
        outcomes = fetch_all(todo, policy, client, concurrency=cfg.threads, clock=cfg.timestamp())
    finally:
        if own:
            client.close()
    handoffs = HandoffQueue()
    by_url = {r.url: r for r in load_retrievals(cfg)}
    for outcome in outcomes:
        freeze_outcome(store, outcome)
        if outcome.status == UNREACHABLE:
            blocker = detect_blocker(outcome.http_status, outcome.body)
            if blocker:
                handoffs.handoff(by_url[outcome.url], blocker)
    if handoffs.tickets:
        _write_ndjson(cfg.dir("snapshots") / "handoffs.ndjson",
                      [t.to_dict() for _, t in sorted(handoffs.tickets.items())])
    return {u: store.lookup(u) for u in urls}


@dataclass
class _JudgeTask:
    retrieval: Retrieval
    query: str
    entry: dict | None


def _judge_one(task: _JudgeTask, store: SnapshotStore, backend) -> tuple[str, dict | str]:
    entry = task.entry
    status = entry["status"] if entry else UNDETERMINED
    if status == UNDETERMINED:
        return UNDETERMINED_SCRAPE, (entry or {}).get("reason") or "not fetched"
    snapshot = store.read(entry["id"]) if status == OK else None
    try:
        return "judged", judge_all(task.query, snapshot, task.retrieval.dataset_name, backend, status)
    except JudgeFailure as exc:
        return JUDGE_FAILURE, str(exc)


def stage_judge(cfg: RunConfig, backend=None) -> list[dict]:
    backend = backend or make_judge_backend(cfg)
    queries = {q.id: q.text for q in load_queries(cfg.dir("queries") / "queries.tsv")}
    store = SnapshotStore(cfg.snapshot_dir)
    retrievals = sorted(load_retrievals(cfg), key=lambda r: (r.strategy, r.query_id, r.rank))
    tasks = [_JudgeTask(r, queries[r.query_id], store.lookup(r.url)) for r in retrievals]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        results = list(pool.map(lambda t: _judge_one(t, store, backend), tasks))

    queue = ReviewQueue(cfg.dir("review") / "queue.ndjson")
    rows, judged = [], []
    for task, (kind, payload) in zip(tasks, results):
        r = task.retrieval
        if kind != "judged":
            queue.route(r.to_dict(), kind, note=payload)
            continue
        labels = {}
        for dim in DIMENSIONS:
            j: Judgment = payload[dim]
            labels[dim] = j.label
            rows.append({**r.to_dict(), **j.to_dict(), "snapshot_id": (task.entry or {}).get("id")})
        if task.entry["status"] == OK:
            judged.append((r, labels))
    rng = random.Random(cfg.seed)
    if len(judged) >= 2:
        gold = sample_gold_set(judged, cfg.gold_fraction, lambda pair: pair[1][PAGE_TYPE], rng)
        for r, _ in gold:
            queue.route(r.to_dict(), GOLD_SAMPLE)
    queue.save()
    _write_ndjson(cfg.dir("judgments") / "judgments.ndjson", rows)
    return rows


# --- reporting ------------------------------------------------------------

@dataclass
class LabeledRetrieval:
    retrieval: Retrieval
    labels: dict
    source: str  # judge backend id, or "human"

    @property
    def verdict(self) -> metrics.FairVerdict:
        return metrics.fair_verdict(self.labels[RELEVANCE], self.labels[ACCESSIBILITY], self.labels[PAGE_TYPE])


def labeled_retrievals(cfg: RunConfig) -> tuple[list[LabeledRetrieval], list[Retrieval]]:
    """Retrievals with final labels, and those still waiting for human review."""
    by_key: dict[tuple, dict] = defaultdict(dict)
    sources: dict[tuple, str] = {}
    for row in _read_ndjson(cfg.dir("judgments") / "judgments.ndjson"):
        key = (row["strategy"], row["query_id"], row["url"])
        by_key[key][row["dimension"]] = row["label"]
        sources[key] = row["backend_id"]
    queue = ReviewQueue(cfg.dir("review") / "queue.ndjson")
    for item in queue.merged():
        if item.reason == GOLD_SAMPLE:
            continue  # gold labels validate the judge; they do not replace it
        ret = item.retrieval
        key = (ret["strategy"], ret["query_id"], ret["url"])
        by_key[key] = dict(item.final)
        sources[key] = "human"
    labeled, pending = [], []
    for r in sorted(load_retrievals(cfg), key=lambda r: (r.strategy, r.query_id, r.rank)):
        key = (r.strategy, r.query_id, r.url)
        labels = by_key.get(key)
        if labels and all(d in labels for d in DIMENSIONS):
            labeled.append(LabeledRetrieval(r, labels, sources[key]))
        else:
            pending.append(r)
    return labeled, pending


def _safe(fn, *args):
    try:
        return fn(*args)
    except (metrics.UndefinedMetricError, metrics.InsufficientDataError):
        return None


_CATEGORIES = {RELEVANCE: RELEVANCE_LABELS, ACCESSIBILITY: ACCESSIBILITY_LEVELS, PAGE_TYPE: PAGE_TYPES}


def build_report(cfg: RunConfig) -> dict:
    labeled, pending = labeled_retrievals(cfg)
    runs = load_runs(cfg)
    per: dict[str, dict] = {}
    labels_by: dict[str, dict[str, list]] = {}
    counts_by: dict[str, list[int]] = {}
    for strategy in cfg.strategies:
        mine = [x for x in labeled if x.retrieval.strategy == strategy]
        answered = [run["query_id"] for run in runs[strategy] if run["status"] == ANSWERED]
        compliant = sum(x.verdict.compliant for x in mine)
        per_query = Counter(x.retrieval.query_id for x in mine if x.verdict.compliant)
        counts_by[strategy] = [per_query[q] for q in answered]
        labels_by[strategy] = {d: [x.labels[d] for x in mine] for d in DIMENSIONS}
        prec = _safe(metrics.precision_report, compliant, len(mine))
        dens = _safe(metrics.result_density, compliant, len(answered), cfg.max_results)
        status = Counter(run["status"] for run in runs[strategy])
        entry = {
            "queries": len(runs[strategy]),
            "answered_queries": len(answered),
            "fallback_queries": status[FALLBACK],
            "errored_queries": status[ERRORED],
            "retrievals": len(mine),
            "pending_review": sum(1 for r in pending if r.strategy == strategy),
            "human_labeled": sum(1 for x in mine if x.source == "human"),
            "fair_compliant": compliant,
            "precision_pct": prec.display if prec else None,
            "density": dens.display_density if dens else None,
            "utilization_pct": dens.display_utilization if dens else None,
            "distributions": {},
        }
        if strategy == HYBRID:
            entry["sources"] = dict(sorted(Counter(run.get("source") for run in runs[strategy]).items()))
        for dim in DIMENSIONS:
            c = Counter(labels_by[strategy][dim])
            n = len(mine)
            entry["distributions"][dim] = {
                str(cat): {"count": c[cat], "pct": metrics.display_percent(c[cat], n) if n else None}
                for cat in _CATEGORIES[dim]
            }
        per[strategy] = entry

    comparisons = []
    reference = BASELINE if BASELINE in cfg.strategies else cfg.strategies[0]
    ref_items = [x for x in labeled if x.retrieval.strategy == reference]
    for strategy in cfg.strategies:
        if strategy == reference:
            continue
        mine = [x for x in labeled if x.retrieval.strategy == strategy]
        comp: dict = {"reference": reference, "subject": strategy}
        pc = _safe(metrics.dataset_precision, [x.verdict for x in ref_items], [x.verdict for x in mine])
        if pc is not None:
            comp["precision_relative_pct"] = pc.relative_improvement
            comp["precision_z"] = round(pc.significance.z, 4)
            comp["precision_p"] = float(f"{pc.significance.p_value:.6g}")
        p = _safe(metrics.density_significance, counts_by[reference], counts_by[strategy])
        comp["density_p"] = float(f"{p:.6g}") if p is not None else None
        comp["distributions"] = {}
        if ref_items and mine:
            for dim in DIMENSIONS:
                rows = metrics.distribution_report(labels_by[strategy][dim], labels_by[reference][dim],
                                                   _CATEGORIES[dim])
                comp["distributions"][dim] = {
                    str(row.label): {"pct": row.percent, "reference_pct": row.comparison_percent,
                                     "relative_pct": row.relative_delta}
                    for row in rows
                }
        comparisons.append(comp)
    return {
        "reference_date": cfg.reference_date.isoformat(),
        "seed": cfg.seed,
        "strategies": per,
        "comparisons": comparisons,
    }


def _fmt(v) -> str:
    return "–" if v is None else str(v)


def render_markdown(report: dict) -> str:
    out = io.StringIO()
    out.write(f"# Retrieval comparison\n\nReference date: {report['reference_date']}; seed {report['seed']}.\n\n")
    names = list(report["strategies"])
    out.write("## Summary\n\n| metric | " + " | ".join(names) + " |\n|---|" + "---|" * len(names) + "\n")
    for key in ("queries", "answered_queries", "retrievals", "pending_review", "fair_compliant",
                "precision_pct", "density", "utilization_pct"):
        cells = [report["strategies"][n][key] for n in names]
        if key == "density":
            cells = [None if c is None else f"{c:.2f}" for c in cells]
        out.write(f"| {key} | " + " | ".join(_fmt(c) for c in cells) + " |\n")
    for dim in DIMENSIONS:
        out.write(f"\n## {dim}\n\n| label | " + " | ".join(f"{n} n | {n} %" for n in names) + " |\n")
        out.write("|---|" + "---|---|" * len(names) + "\n")
        for cat in next(iter(report["strategies"].values()))["distributions"][dim]:
            cells = []
            for n in names:
                cell = report["strategies"][n]["distributions"][dim][cat]
                cells += [str(cell["count"]), _fmt(cell["pct"])]
            out.write(f"| {cat} | " + " | ".join(cells) + " |\n")
    for comp in report["comparisons"]:
        out.write(f"\n## {comp['subject']} vs {comp['reference']}\n\n")
        out.write(f"- precision relative change: {_fmt(comp.get('precision_relative_pct'))}%\n")
        out.write(f"- two-proportion z: {_fmt(comp.get('precision_z'))}, p = {comp.get('precision_p', '–')}\n")
        out.write(f"- density Mann-Whitney p = {_fmt(comp.get('density_p'))}\n")
    return out.getvalue()


def render_csv(labeled: Sequence[LabeledRetrieval]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "query_id", "rank", "url", "dataset_name", "relevance", "accessibility",
                "page_type", "fair_compliant", "label_source"])
    for x in labeled:
        r = x.retrieval
        w.writerow([r.strategy, r.query_id, r.rank, r.url, r.dataset_name, x.labels[RELEVANCE],
                    x.labels[ACCESSIBILITY], x.labels[PAGE_TYPE], int(x.verdict.compliant), x.source])
    return buf.getvalue()


def stage_report(cfg: RunConfig) -> dict:
    report = build_report(cfg)
    labeled, _ = labeled_retrievals(cfg)
    out = cfg.dir("report")
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "report.md").write_text(render_markdown(report), encoding="utf-8")
    (out / "labels.csv").write_text(render_csv(labeled), encoding="utf-8")
    return report


# --- autorater validation -------------------------------------------------

_KAPPA_SCALES = {
    RELEVANCE: metrics.RELEVANCE_SCALE,
    ACCESSIBILITY: metrics.ACCESSIBILITY_SCALE,
    PAGE_TYPE: metrics.PAGE_TYPE_SCALE,
}


def validate_autorater(gold_labels: Sequence[Mapping], judge_labels: Sequence[Mapping],
                       kernel: str | None = None) -> dict[str, metrics.KappaReport]:
    """Linear-weighted kappa per dimension between gold and judge labels (paired by position)."""
    if not gold_labels:
        raise metrics.InsufficientDataError("empty gold set")
    if len(gold_labels) != len(judge_labels):
        raise ValueError("gold and judge label lists differ in length")
    return {
        dim: metrics.weighted_kappa([g[dim] for g in gold_labels], [j[dim] for j in judge_labels],
                                    _KAPPA_SCALES[dim], "linear", kernel)
        for dim in DIMENSIONS
    }


def kappa_to_dict(rep: metrics.KappaReport) -> dict:
    return {"kappa": rep.kappa, "observed_disagreement": rep.observed_disagreement,
            "expected_disagreement": rep.expected_disagreement, "n": rep.n, "dropped": rep.dropped}


def stage_validate(cfg: RunConfig) -> dict[str, metrics.KappaReport]:
    queue = ReviewQueue(cfg.dir("review") / "queue.ndjson")
    judged: dict[tuple, dict] = defaultdict(dict)
    for row in _read_ndjson(cfg.dir("judgments") / "judgments.ndjson"):
        judged[(row["strategy"], row["query_id"], row["url"])][row["dimension"]] = row["label"]
    gold, auto = [], []
    for item in queue.merged(GOLD_SAMPLE):
        r = item.retrieval
        key = (r["strategy"], r["query_id"], r["url"])
        if key in judged:
            gold.append(item.final)
            auto.append(judged[key])
    reports = validate_autorater(gold, auto)
    out = cfg.dir("report")
    out.mkdir(parents=True, exist_ok=True)
    body = {dim: kappa_to_dict(rep) for dim, rep in reports.items()}
    (out / "autorater.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return reports


# --- whole pipeline -------------------------------------------------------

STAGES = ("ingest", "run", "snapshot", "judge", "report")


def run_stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, StageError):
        raise
    except Exception as exc:
        log.debug("stage %s failed", name, exc_info=True)
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


def run_pipeline(cfg: RunConfig, client: httpx.Client | None = None, judge_backend=None, llm=None,
                 backends: Mapping[str, SearchBackend] | None = None) -> dict:
    """Run every stage in order; returns the comparison report."""
    run_stage("ingest", stage_ingest, cfg)
    run_stage("run", stage_run, cfg, llm, backends)
    run_stage("snapshot", stage_snapshot, cfg, client)
    run_stage("judge", stage_judge, cfg, judge_backend)
    return run_stage("report", stage_report, cfg)
