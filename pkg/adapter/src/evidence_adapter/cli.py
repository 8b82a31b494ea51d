"""Command line for the serving adapter.

Wraps either the bundled linear reference model (--weights) or any user
module exposing get_model() (--model), then serves the line-delimited JSON
protocol on stdin/stdout until EOF.
"""

from __future__ import annotations

import argparse
import importlib
import sys

from .linear import reference_linear_model
from .serve import serve

__all__ = ["main"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evidence-adapter", description=__doc__.splitlines()[0]
    )
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--weights", help="linear model weights CSV, shape (classes, features+1)")
    group.add_argument(
        "--model",
        help="MODULE[:ATTR] whose factory (default get_model) returns the model callable",
    )
    parser.add_argument("--names", default=None, help="comma-separated class names")
    parser.add_argument(
        "--batch-limit", type=int, default=64, help="largest batch accepted per request"
    )
    return parser


def _load_model(args):
    if args.weights is not None:
        return reference_linear_model(args.weights)
    module_name, _, attr = args.model.partition(":")
    module = importlib.import_module(module_name)
    factory = getattr(module, attr or "get_model")
    return factory()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        model = _load_model(args)
        class_count = int(getattr(model, "class_count"))
        names = args.names.split(",") if args.names is not None else None
        return serve(model, class_count, names=names, batch_limit=args.batch_limit)
    except (OSError, ValueError, ImportError, AttributeError, TypeError) as exc:
        print(f"evidence-adapter: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
