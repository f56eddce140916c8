"""Command-line entry point: build an index from a source tree."""

from __future__ import annotations

import argparse
import logging
import sys

from .embed import embed_batch
from .errors import IndexBuilderError
from .extract import extract_declarations
from .writer import write_index


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="indexbuilder")
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build", help="extract, embed, and write an index")
    build.add_argument("tree", help="library source tree root")
    build.add_argument("--pin", required=True, help="commit pin the tree must match")
    build.add_argument("--endpoint", required=True, help="embedding endpoint URL")
    build.add_argument("--out", required=True, help="output index file")
    build.add_argument("--model", default="", help="embedding model name")
    build.add_argument("--batch-size", type=int, default=16)
    build.add_argument("--checkpoint", default=None, help="resume checkpoint file")
    build.add_argument("--workers", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        declarations = extract_declarations(args.tree, args.pin)
        vectors = embed_batch(
            declarations,
            args.endpoint,
            args.batch_size,
            model=args.model,
            checkpoint_path=args.checkpoint,
            workers=args.workers,
        )
        write_index(declarations, vectors, args.out, commit_pin=args.pin)
    except IndexBuilderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(declarations)} entries to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
