"""Command-line entry point: ``fairretrieval <command> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path

from . import pipeline
from .backends import IndexBackend, serve_backend
from .extract import harvest
from .index import DATA_TYPES, LICENSE_CLASSES, FacetConstraints, build_index
from .metrics import InsufficientDataError, UndefinedMetricError
from .queries import QueryFormatError, convert_ntcir_topics
from .records import read_ndjson, write_ndjson
from .review import ReviewQueue, ReviewStateError

log = logging.getLogger("fairretrieval")

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def _config(args) -> pipeline.RunConfig:
    return pipeline.RunConfig.from_file(args.config)


def _agent_llm(cfg: pipeline.RunConfig):
    if not cfg.agent_llm:
        return None
    from .llm import ChatCompletionsClient, LLMConfigError, RateLimitedClient

    try:
        return RateLimitedClient(ChatCompletionsClient.from_env())
    except LLMConfigError as exc:
        raise pipeline.ConfigError(str(exc)) from None


def cmd_ingest(args) -> int:
    if args.ntcir:
        if not args.out:
            raise pipeline.ConfigError("ingest --ntcir needs --out DST")
        n = convert_ntcir_topics(args.ntcir, args.out)
        print(f"wrote {n} queries to {args.out}")
        return EXIT_OK
    if not args.config:
        raise pipeline.ConfigError("ingest needs --config or --ntcir SRC --out DST")
    cfg = _config(args)
    queries = pipeline.run_stage("ingest", pipeline.stage_ingest, cfg)
    print(f"ingested {len(queries)} queries")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    out = pipeline.run_stage("run", pipeline.stage_run, cfg, _agent_llm(cfg))
    for strategy, runs in out.items():
        answered = sum(1 for r in runs if r["status"] == "answered")
        print(f"{strategy}: {answered}/{len(runs)} queries answered")
    return EXIT_OK


def cmd_snapshot(args) -> int:
    cfg = _config(args)
    entries = pipeline.run_stage("snapshot", pipeline.stage_snapshot, cfg, None, args.refetch)
    by_status: dict[str, int] = {}
    for e in entries.values():
        by_status[e["status"]] = by_status.get(e["status"], 0) + 1
    print(", ".join(f"{k}: {v}" for k, v in sorted(by_status.items())) or "nothing to fetch")
    return EXIT_OK


def cmd_judge(args) -> int:
    cfg = _config(args)
    backend = pipeline.make_judge_backend(cfg)
    rows = pipeline.run_stage("judge", pipeline.stage_judge, cfg, backend)
    print(f"{len(rows)} judgments written")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _config(args)
    pipeline.run_stage("report", pipeline.stage_report, cfg)
    print((cfg.dir("report") / "report.md").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    pipeline.run_pipeline(cfg, llm=_agent_llm(cfg), judge_backend=pipeline.make_judge_backend(cfg))
    print(f"report written to {cfg.dir('report')}")
    return EXIT_OK


def cmd_review(args) -> int:
    cfg = _config(args)
    queue = ReviewQueue(cfg.dir("review") / "queue.ndjson")
    if args.action == "list":
        for item in sorted(queue.items.values(), key=lambda i: i.item_id):
            if args.all or item.state != "merged":
                print(f"{item.state:9} {item.reason:19} {item.item_id}")
        return EXIT_OK
    if not args.file and args.action != "merge":
        raise pipeline.ConfigError(f"review {args.action} needs --file")
    if args.action == "export":
        n = queue.export(args.file, args.annotator)
        print(f"exported {n} open items to {args.file}")
        return EXIT_OK
    if args.action == "import":
        n = queue.import_annotations(args.file, args.annotator)
        queue.save()
        print(f"imported {n} annotations")
        return EXIT_OK
    # merge: auto-merge agreeing items; resolutions come from the file, if any
    resolutions = {}
    if args.file and Path(args.file).exists():
        for row in json.loads(Path(args.file).read_text(encoding="utf-8")):
            if row.get("resolution"):
                resolutions[row["item_id"]] = row["resolution"]
    merged = skipped = 0
    for item in queue.open_items():
        if len(item.annotations) < 2:
            skipped += 1
            continue
        try:
            queue.merge_consensus(item.item_id, resolutions.get(item.item_id))
            merged += 1
        except ReviewStateError as exc:
            log.warning("%s", exc)
            skipped += 1
    queue.save()
    print(f"merged {merged}, still open {skipped}")
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.gold or args.judged:
        if not (args.gold and args.judged):
            raise pipeline.ConfigError("--gold and --judged go together")
        gold = [json.loads(x) for x in Path(args.gold).read_text(encoding="utf-8").splitlines() if x.strip()]
        auto = [json.loads(x) for x in Path(args.judged).read_text(encoding="utf-8").splitlines() if x.strip()]
        reports = pipeline.validate_autorater(gold, auto)
    else:
        if not args.config:
            raise pipeline.ConfigError("validate-autorater needs --config or --gold/--judged")
        reports = pipeline.run_stage("validate-autorater", pipeline.stage_validate, _config(args))
    print(json.dumps({d: pipeline.kappa_to_dict(r) for d, r in reports.items()}, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_hybrid(args) -> int:
    cfg = _config(args)
    if pipeline.HYBRID not in cfg.strategies:
        cfg = pipeline.RunConfig(**{**cfg.__dict__, "strategies": (pipeline.HYBRID,)})
    from .queries import Query

    sem = pipeline.make_backend(cfg, "semantic")
    base = pipeline.make_backend(cfg, "baseline")
    res = pipeline.run_hybrid(Query(args.query_id, args.query), sem, base, _agent_llm(cfg), cfg.max_results)
    print(json.dumps({"source": res.source, "response": res.response()}, ensure_ascii=False))
    return EXIT_OK


def _read_pages(manifest: Path) -> list[tuple[str, str]]:
    data = json.loads(manifest.read_text(encoding="utf-8"))
    pages = []
    for url in sorted(data):
        spec = data[url]
        if spec.get("file") and spec.get("status", 200) == 200:
            pages.append((url, (manifest.parent / spec["file"]).read_text(encoding="utf-8")))
    return pages


def cmd_extract(args) -> int:
    result = harvest(_read_pages(Path(args.pages)))
    n = write_ndjson(result.records, args.out)
    if args.rejected:
        write_ndjson([rec for rec, _ in result.rejected], args.rejected)
    print(f"kept {n} records, rejected {len(result.rejected)}")
    for key, count in sorted(result.diagnostics.counts.items()):
        print(f"  {key}: {count}")
    return EXIT_OK


def cmd_index(args) -> int:
    if args.action == "build":
        idx = build_index(read_ndjson(args.source))
        idx.save(args.out)
        print(f"indexed {len(idx)} records ({idx.duplicates} duplicate landing URLs dropped)")
        return EXIT_OK
    idx = pipeline.open_index(args.source)
    facets = None
    if args.license or args.data_type or args.last_updated:
        if not args.reference_date:
            raise pipeline.ConfigError("faceted search needs --reference-date")
        facets = FacetConstraints(date.fromisoformat(args.reference_date), args.license, args.data_type,
                                  args.last_updated)
    backend = IndexBackend(idx, facets)
    if args.action == "serve":
        server = serve_backend(backend, args.host, args.port)
        host, port = server.server_address[:2]
        print(f"serving POST http://{host}:{port}/search (Ctrl-C to stop)", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            server.shutdown()
        return EXIT_OK
    for r in backend.search(args.keywords, args.limit):
        print(f"{r.payload['score']:.4f}\t{r.url}\t{r.title}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairretrieval", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, required=True):
        sp.add_argument("-c", "--config", required=required, help="INI run configuration")
        return sp

    sp = with_config(sub.add_parser("ingest", help="load and canonicalize the query set"), required=False)
    sp.add_argument("--ntcir", help="convert a two-column NTCIR topic file instead")
    sp.add_argument("--out", help="destination for --ntcir")
    sp.set_defaults(func=cmd_ingest)

    with_config(sub.add_parser("run", help="run the configured agent strategies")).set_defaults(func=cmd_run)

    sp = with_config(sub.add_parser("snapshot", help="fetch and freeze retrieved pages"))
    sp.add_argument("--refetch", action="store_true", help="fetch again even if already frozen")
    sp.set_defaults(func=cmd_snapshot)

    with_config(sub.add_parser("judge", help="score frozen snapshots")).set_defaults(func=cmd_judge)
    with_config(sub.add_parser("report", help="write the comparison report")).set_defaults(func=cmd_report)
    with_config(sub.add_parser("pipeline", help="all stages end to end")).set_defaults(func=cmd_pipeline)

    sp = with_config(sub.add_parser("review", help="human review queue"))
    sp.add_argument("action", choices=("list", "export", "import", "merge"))
    sp.add_argument("--file", help="annotation JSON file")
    sp.add_argument("--annotator", help="annotator id for export/import")
    sp.add_argument("--all", action="store_true", help="list merged items too")
    sp.set_defaults(func=cmd_review)

    sp = with_config(sub.add_parser("validate-autorater", help="kappa of judge against the gold set"),
                     required=False)
    sp.add_argument("--gold", help="NDJSON gold labels (alternative to --config)")
    sp.add_argument("--judged", help="NDJSON judge labels, paired line by line with --gold")
    sp.set_defaults(func=cmd_validate)

    sp = with_config(sub.add_parser("hybrid", help="semantic-first query with baseline fallback"))
    sp.add_argument("query")
    sp.add_argument("--query-id", default="adhoc")
    sp.set_defaults(func=cmd_hybrid)

    sp = sub.add_parser("extract", help="harvest schema.org Dataset markup from saved pages")
    sp.add_argument("pages", help="page manifest JSON (url -> {file, status})")
    sp.add_argument("--out", required=True, help="NDJSON of valid records")
    sp.add_argument("--rejected", help="NDJSON of records failing the validity rules")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("index", help="build, query or serve the metadata index")
    sp.add_argument("action", choices=("build", "search", "serve"))
    sp.add_argument("source", help="records NDJSON (build) or index dir / NDJSON")
    sp.add_argument("keywords", nargs="?", default="", help="search keywords")
    sp.add_argument("--out", help="index directory (build)")
    sp.add_argument("--limit", type=int, default=10)
    sp.add_argument("--license", choices=LICENSE_CLASSES)
    sp.add_argument("--data-type", choices=DATA_TYPES)
    sp.add_argument("--last-updated", type=int, metavar="DAYS")
    sp.add_argument("--reference-date", help="YYYY-MM-DD anchor for --last-updated")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8765)
    sp.set_defaults(func=cmd_index)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "index":
        if args.action == "build" and not args.out:
            parser.error("index build needs --out")
        if args.action == "search" and not args.keywords.strip():
            parser.error("index search needs keywords")
    try:
        return args.func(args)
    except pipeline.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (QueryFormatError, InsufficientDataError, UndefinedMetricError, ReviewStateError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
