"""Command-line surface: offline preprocess/build, online query, evaluation.

Exit codes: 0 success, 2 usage error (argparse), 3 missing or unreadable
input, 4 file format/integrity error, 5 build or engine error, 6
evaluation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import evaluate as eval_mod
from .corpus import PipelineConfig, StopList
from .embed import EmbedderSpec
from .errors import DualrecError, EngineBuildError, FormatError
from .index import HnswParams, VectorCollection
from .reduce import load_model, pca_transform
from .router import EngineTemplate, Query, build_engine, load_engine, recommend, route, save_engine

EXIT_INPUT = 3
EXIT_FORMAT = 4
EXIT_ENGINE = 5
EXIT_EVAL = 6


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"no such file: {p}", EXIT_INPUT)
    return p


def _emit(payload: dict, as_json: bool, lines: list[str]) -> None:
    if as_json:
        print(json.dumps(payload, ensure_ascii=False, indent=2))
    else:
        for line in lines:
            print(line)


# -- preprocess --------------------------------------------------------------


def cmd_preprocess(args) -> int:
    input_path = _require_file(args.input)
    stops = StopList.from_file(_require_file(args.stoplist)) if args.stoplist else StopList.default()
    records, issues = corpus_mod.load_raw_records(
        input_path,
        fmt=args.format,
        encoding=args.encoding,
        column_map=dict(kv.split("=", 1) for kv in args.map) if args.map else None,
        skip_bad_rows=args.skip_bad_rows,
    )
    for issue in issues:
        print(f"warning: skipped row: {issue}", file=sys.stderr)
    config = PipelineConfig(stopwords_on_headlines=not args.no_headline_stopwords)
    articles, report = corpus_mod.preprocess(records, stops, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus_mod.write_articles_jsonl(articles, out / "articles.jsonl")
    (out / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8"
    )
    _emit(
        report.to_dict(),
        args.json,
        [f"{key}: {value}" for key, value in report.to_dict().items()]
        + [f"wrote {len(articles)} articles to {out / 'articles.jsonl'}"],
    )
    return 0


# -- build -------------------------------------------------------------------


def cmd_build(args) -> int:
    articles_path = _require_file(args.articles)
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise CliError(f"output directory {out} is not empty (use --force to rebuild)", EXIT_ENGINE)

    articles = corpus_mod.load_articles_jsonl(articles_path)
    if args.embedder == "synthetic":
        spec = EmbedderSpec(provider="synthetic", seed=args.seed)
    else:
        spec = EmbedderSpec(
            provider="exchange_file",
            model_name=args.model_name,
            headline_exchange=args.headline_exchange or "",
            content_exchange=args.content_exchange or "",
            query_exchange=args.query_exchange or "",
        )
    template = EngineTemplate(
        theta=args.theta,
        default_k=args.k,
        short_pooling=args.short_pooling,
        short_dim=args.short_dim,
        long_pooling=args.long_pooling,
        long_dim=args.long_dim,
        index_kind=args.index,
        hnsw_params=HnswParams(m=args.hnsw_m, ef_construction=args.hnsw_ef_construction),
        embedder_spec=spec,
        pca_sample=args.pca_sample,
    )
    cfg = build_engine(articles, template)
    manifest = save_engine(cfg, out)
    summary = {
        "manifest": str(manifest),
        "articles": len(articles),
        "collections": {
            "headline": {"n": len(cfg.short_path.collection), "dim": cfg.short_path.d_prime},
            "content": {"n": len(cfg.long_path.collection), "dim": cfg.long_path.d_prime},
        },
        "theta": cfg.theta,
        "index": args.index,
    }
    _emit(summary, args.json, [f"built engine at {manifest}", json.dumps(summary["collections"])])
    return 0


# -- query -------------------------------------------------------------------


def _format_recommendations(query_text: str, cfg, recs, as_json: bool, excerpt: int = 80) -> str:
    q = Query.make(query_text)
    pathway = route(q, cfg).name
    if as_json:
        return json.dumps(
            {
                "query_chars": q.char_len,
                "pathway": pathway,
                "results": [rec.__dict__ for rec in recs],
            },
            ensure_ascii=False,
        )
    lines = [f"pathway={pathway} chars={q.char_len} results={len(recs)}"]
    for rec in recs:
        snippet = rec.full_content[:excerpt]
        lines.append(f"{rec.rank:3d}. [{rec.score:.4f}] #{rec.article_id} {rec.headline} | {rec.category} | {snippet}")
    return "\n".join(lines)


def cmd_query(args) -> int:
    cfg = load_engine(_require_file(args.manifest))
    k = args.k if args.k is not None else cfg.default_k
    if k < 1:
        raise CliError(f"k must be >= 1, got {k}", 2)

    def serve(text: str) -> None:
        recs = recommend(Query.make(text), k, cfg, exclude_id=args.exclude_id)
        print(_format_recommendations(text, cfg, recs, args.json))

    if args.text is not None:
        serve(args.text)
    elif args.file is not None:
        serve(_require_file(args.file).read_text(encoding="utf-8"))
    else:
        for line in sys.stdin:
            line = line.strip()
            if not line:
                continue
            serve(line)
    return 0


# -- evaluate ----------------------------------------------------------------


def cmd_evaluate(args) -> int:
    qrels = eval_mod.Qrels.from_tsv(_require_file(args.qrels))
    if args.runs:
        run = eval_mod.RetrievalRun.from_jsonl(_require_file(args.runs), k=args.k)
    else:
        if not args.manifest or not args.queries:
            raise CliError("either --runs or both --manifest and --queries are required", 2)
        cfg = load_engine(_require_file(args.manifest))
        rankings = {}
        for line in _require_file(args.queries).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            qid, text = line.split("\t", 1)
            recs = recommend(Query.make(text), args.k, cfg)
            rankings[eval_mod._coerce_id(qid)] = [rec.article_id for rec in recs]
        run = eval_mod.RetrievalRun(rankings, k=args.k)
    report = eval_mod.precision_at_k(run, qrels, args.k)
    lines = [f"Q{qp.query_id}: tp={qp.tp} precision={qp.precision:.3f}" for qp in report.per_query]
    lines.append(f"mean precision@{report.k} over {report.n_queries} queries: {report.mean_precision:.4f}")
    _emit(report.to_dict(), args.json, lines)
    return 0


def cmd_compare(args) -> int:
    truth = VectorCollection.open(_require_file(args.ground_truth))
    queries: dict[object, np.ndarray] = {}
    raw = json.loads(_require_file(args.queries).read_text(encoding="utf-8"))
    for qid, vec in raw.items():
        queries[qid] = np.asarray(vec, dtype=np.float64)

    candidates = {}
    for spec in args.candidate:
        label, _, rest = spec.partition("=")
        if not rest:
            raise CliError(f"bad --candidate {spec!r}, expected label=collection[:model]", 2)
        col_path, _, model_path = rest.partition(":")
        collection = VectorCollection.open(_require_file(col_path))
        if model_path:
            model = load_model(_require_file(model_path))
            reducer = lambda v, _m=model: pca_transform(_m, v)
        else:
            reducer = lambda v: v
        candidates[label] = (reducer, collection)

    reports = eval_mod.compare_reducers(truth, candidates, queries, args.k)
    lines = []
    for label, report in reports.items():
        lines.append(
            f"{label}: mean overlap {report.mean_overlap_pct:.1f}% mean jaccard {report.mean_jaccard:.3f}"
        )
        if args.csv:
            report.to_csv(Path(args.csv) / f"compare_{label}.csv")
    _emit({label: r.to_dict() for label, r in reports.items()}, args.json, lines)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualrec", description="Dual-pathway semantic retrieval engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean a raw corpus into articles")
    p.add_argument("--input", required=True)
    p.add_argument("--stoplist", default=None, help="stop-word file (default: bundled list)")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["auto", "csv", "jsonl"], default="auto")
    p.add_argument("--encoding", default="utf-8")
    p.add_argument("--map", action="append", default=[], metavar="FIELD=COLUMN")
    p.add_argument("--skip-bad-rows", action="store_true")
    p.add_argument("--no-headline-stopwords", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("build", help="build the dual-pathway engine")
    p.add_argument("--articles", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--profile", choices=["default"], default="default")
    p.add_argument("--theta", type=int, default=150)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--short-pooling", choices=["mean", "max", "cls"], default="cls")
    p.add_argument("--short-dim", type=int, default=64)
    p.add_argument("--long-pooling", choices=["mean", "max", "cls"], default="mean")
    p.add_argument("--long-dim", type=int, default=128)
    p.add_argument("--index", choices=["exact", "hnsw"], default="hnsw")
    p.add_argument("--hnsw-m", type=int, default=16)
    p.add_argument("--hnsw-ef-construction", type=int, default=200)
    p.add_argument("--embedder", choices=["synthetic", "exchange"], default="synthetic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-name", default="")
    p.add_argument("--headline-exchange", default=None)
    p.add_argument("--content-exchange", default=None)
    p.add_argument("--query-exchange", default=None)
    p.add_argument("--pca-sample", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="serve one query, a file, or stdin lines")
    p.add_argument("--manifest", required=True)
    p.add_argument("--text", default=None)
    p.add_argument("--file", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--exclude-id", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evaluate", help="precision@k for a run against qrels")
    p.add_argument("--runs", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--queries", default=None, help="TSV of query_id<TAB>text (with --manifest)")
    p.add_argument("--qrels", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="overlap/Jaccard of reduced spaces vs ground truth")
    p.add_argument("--ground-truth", required=True, help="exact-index full-dim collection file")
    p.add_argument("--candidate", action="append", required=True, metavar="LABEL=COLLECTION[:MODEL]")
    p.add_argument("--queries", required=True, help="JSON of query_id -> full-dim vector")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--csv", default=None, help="directory for per-candidate CSV tables")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "query" and args.k is not None and args.k < 1:
        parser.error(f"k must be >= 1, got {args.k}")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except EngineBuildError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except (DualrecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
