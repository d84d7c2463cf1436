"""Command-line entry: label a JSONL corpus against a candidate label file.

Exit codes: 0 all docs labeled, 3 some docs failed (results still written),
1 nothing could be labeled or the pipeline failed to load, 2 bad usage.
Errors and per-doc failures print as single JSON lines on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .labeling import (
    DEFAULT_TEMPLATE,
    agreement,
    label_documents,
    read_candidates,
    read_gold,
    read_requests,
    write_results,
)

EXIT_OK = 0
EXIT_TOTAL_FAILURE = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3


def _fail(message, code):
    print(json.dumps({"error": message}), file=sys.stderr)
    return code


def _parser():
    parser = argparse.ArgumentParser(
        prog="doclabeler",
        description="Zero-shot NLI labeling of documents against a candidate label set.",
    )
    parser.add_argument("--input", required=True, help="JSONL corpus with id and text")
    parser.add_argument("--candidates", required=True, help="candidate labels, one per line")
    parser.add_argument("--out", required=True, help="output JSONL labels file")
    parser.add_argument("--model", default="facebook/bart-large-mnli",
                        help="pretrained NLI model identifier")
    parser.add_argument("--template", default=DEFAULT_TEMPLATE,
                        help="hypothesis template with one {} placeholder")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--threshold", type=float, default=None,
                        help="emit every label scoring above this instead of just the top one")
    parser.add_argument("--gold", help="JSONL gold labels; prints an agreement report")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    problems = []
    for name in ("input", "candidates", "gold"):
        path = getattr(args, name)
        if path is not None and not os.path.isfile(path):
            problems.append(f"{name} path does not exist: {path}")
    if args.template.count("{}") != 1:
        problems.append(f"template must contain exactly one {{}} placeholder: {args.template!r}")
    if args.batch_size < 1:
        problems.append("batch-size must be positive")
    if args.threshold is not None and not 0.0 <= args.threshold < 1.0:
        problems.append("threshold must be in [0, 1)")
    if problems:
        return _fail("; ".join(problems), EXIT_USAGE)

    try:
        candidates = read_candidates(args.candidates)
        requests = read_requests(args.input, candidates, args.template)
    except ValueError as exc:
        return _fail(str(exc), EXIT_USAGE)

    try:
        from .nli import TransformersBackend
        backend = TransformersBackend(args.model, batch_size=args.batch_size)
    except Exception as exc:
        return _fail(f"cannot load NLI pipeline {args.model!r}: {exc}", EXIT_TOTAL_FAILURE)

    results, failures = label_documents(requests, backend)
    for failure in failures:
        print(json.dumps({"failed_id": failure.doc_id, "error": failure.error}),
              file=sys.stderr)
    if results:
        write_results(results, args.out, threshold=args.threshold)

    if args.gold:
        gold = read_gold(args.gold)
        try:
            acc = agreement(results, gold)
        except ValueError as exc:
            return _fail(str(exc), EXIT_TOTAL_FAILURE)
        overlap = sum(r.doc_id in gold for r in results)
        print(json.dumps({"agreement": acc, "n_overlap": overlap}))

    if not results:
        return _fail("all documents failed", EXIT_TOTAL_FAILURE)
    return EXIT_PARTIAL if failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
