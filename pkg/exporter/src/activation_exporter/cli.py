"""Command-line activation export."""

from __future__ import annotations

import argparse
import json
import sys

from .export import ExportJob, export, export_lexical
from .models import ModelError, get_model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgeprobe-export")
    parser.add_argument("--model", required=True,
                        help="'debug' or a transformers checkpoint name")
    parser.add_argument("--layers", default="all",
                        help="all | top | range:<lo>:<hi>")
    parser.add_argument("--in", dest="input", required=True,
                        help="edge-probing JSONL input")
    parser.add_argument("--out", required=True, help="EPA1 output path")
    parser.add_argument("--tokens", required=True,
                        help="parallel token JSONL output path")
    parser.add_argument("--lexical", action="store_true",
                        help="export only the embedding layer")
    parser.add_argument("--max-length", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    kwargs = {}
    if args.max_length is not None:
        kwargs["max_length"] = args.max_length
    try:
        model = get_model(args.model, **kwargs)
        job = ExportJob(model=model, input_jsonl=args.input,
                        output_activations=args.out,
                        output_tokens=args.tokens, layers=args.layers)
        report = export_lexical(job) if args.lexical else export(job)
    except (ModelError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2 if isinstance(e, (ValueError, FileNotFoundError)) else 1
    print(json.dumps(report, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
