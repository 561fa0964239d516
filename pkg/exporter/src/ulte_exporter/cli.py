"""Command-line entry point for exchange-file export."""

from __future__ import annotations

import argparse
import sys

from .exporter import (
    DEFAULT_MAX_LEN,
    DEFAULT_MODEL,
    ExporterError,
    ExportJob,
    ModelLoadError,
    StubBackend,
    export,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ulte-export",
        description="Export transformer token embeddings to an exchange file",
    )
    parser.add_argument("--model", default=DEFAULT_MODEL)
    parser.add_argument("--input", required=True, help="id<TAB>text lines, or articles JSONL")
    parser.add_argument("--output", required=True)
    parser.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--format", choices=["tsv", "articles"], default="tsv")
    parser.add_argument("--field", choices=["headline", "content"], default="content",
                        help="article field to embed with --format articles")
    parser.add_argument("--hash-ids", action="store_true",
                        help="file entries under the engine's query-id convention")
    parser.add_argument("--skip-bad-lines", action="store_true")
    parser.add_argument("--backend", choices=["transformers", "stub"], default="transformers",
                        help="stub is a deterministic model-free dry-run backend")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.max_len < 2:
        build_parser().error("--max-len must be >= 2")
    job = ExportJob(
        input_path=args.input,
        output_path=args.output,
        model_name=args.model,
        max_len=args.max_len,
        batch_size=args.batch_size,
        input_format=args.format,
        article_field=args.field,
        hash_ids=args.hash_ids,
        skip_bad_lines=args.skip_bad_lines,
    )
    backend = StubBackend(max_len=args.max_len) if args.backend == "stub" else None
    try:
        count = export(job, backend=backend)
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ExporterError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for issue in job.issues:
        print(f"warning: skipped {issue}", file=sys.stderr)
    print(f"wrote {count} entries to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
