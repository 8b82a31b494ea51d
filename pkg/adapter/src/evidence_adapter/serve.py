"""Request loop for the line-delimited JSON predictor protocol.

Reads one JSON object per stdin line, answers one JSON object per stdout
line with a matching id, and keeps running until EOF. A model exception
poisons only the request that triggered it; the loop stays up.
"""

from __future__ import annotations

import json
import sys
from typing import Callable, Sequence

import numpy as np

__all__ = ["serve", "PROB_SUM_TOL"]

# a probability row may never leave the adapter further than this from 1
PROB_SUM_TOL = 1e-6


def _write(stream, doc: dict) -> None:
    stream.write(json.dumps(doc) + "\n")
    stream.flush()


def _coerce_rows(raw, count: int, class_count: int) -> list[list[float]]:
    """Validate model output and renormalize every row to sum exactly 1."""
    rows = np.asarray(raw, dtype=np.float64)
    if rows.shape != (count, class_count):
        raise ValueError(
            f"model returned shape {rows.shape}, expected ({count}, {class_count})"
        )
    if not np.isfinite(rows).all():
        raise ValueError("model returned a non-finite probability")
    if (rows < 0.0).any():
        raise ValueError("model returned a negative probability")
    sums = rows.sum(axis=1)
    if (sums <= 0.0).any():
        raise ValueError("model returned an all-zero probability row")
    rows = rows / sums[:, None]
    if np.abs(rows.sum(axis=1) - 1.0).max() > PROB_SUM_TOL:
        raise ValueError("probability row failed renormalization")
    return [[float(v) for v in row] for row in rows]


def _handle(
    request,
    model: Callable,
    class_count: int,
    names: Sequence[str],
    batch_limit: int,
) -> dict:
    if not isinstance(request, dict):
        raise ValueError("request must be a JSON object")
    kind = request.get("type")
    req_id = request.get("id")
    if not isinstance(req_id, int):
        raise ValueError("request needs an integer 'id'")
    if kind == "info":
        return {
            "type": "info",
            "id": req_id,
            "classes": class_count,
            "names": list(names),
            "batch_limit": batch_limit,
        }
    if kind == "predict":
        rows = request.get("rows")
        cols = request.get("cols")
        inputs = request.get("inputs")
        if not isinstance(rows, int) or not isinstance(cols, int) or rows < 1 or cols < 1:
            raise ValueError("'rows' and 'cols' must be positive integers")
        if not isinstance(inputs, list):
            raise ValueError("'inputs' must be a list of flat arrays")
        if len(inputs) > batch_limit:
            raise ValueError(f"batch of {len(inputs)} exceeds limit {batch_limit}")
        matrices = []
        for i, flat in enumerate(inputs):
            arr = np.asarray(flat, dtype=np.float64)
            if arr.ndim != 1 or arr.size != rows * cols:
                raise ValueError(
                    f"input {i} has {arr.size} values, expected rows*cols = {rows * cols}"
                )
            matrices.append(arr.reshape(rows, cols))
        if not matrices:
            return {"type": "probs", "id": req_id, "probs": []}
        probs = _coerce_rows(model(matrices), len(matrices), class_count)
        return {"type": "probs", "id": req_id, "probs": probs}
    raise ValueError(f"unknown request type {kind!r}")


def serve(
    model: Callable,
    class_count: int,
    *,
    names: Sequence[str] | None = None,
    batch_limit: int = 64,
    stdin=None,
    stdout=None,
) -> int:
    """Serve protocol requests until stdin closes; returns 0.

    `model` maps a list of (rows, cols) float arrays to one probability row
    per input. Rows are renormalized before emission; rows that cannot be
    repaired (negative, non-finite, all-zero) turn into error replies.
    """
    if class_count < 2:
        raise ValueError("need at least 2 classes")
    if batch_limit < 1:
        raise ValueError("batch_limit must be positive")
    if names is None:
        names = [f"class_{i}" for i in range(class_count)]
    names = [str(n) for n in names]
    if len(names) != class_count:
        raise ValueError(f"got {len(names)} names for {class_count} classes")
    inp = stdin if stdin is not None else sys.stdin
    out = stdout if stdout is not None else sys.stdout
    for line in inp:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            _write(out, {"type": "error", "id": -1, "message": f"request is not valid JSON: {exc}"})
            continue
        req_id = request.get("id") if isinstance(request, dict) else None
        if not isinstance(req_id, int):
            req_id = -1
        try:
            reply = _handle(request, model, class_count, names, batch_limit)
        except Exception as exc:
            _write(out, {"type": "error", "id": req_id, "message": str(exc)})
            continue
        _write(out, reply)
    return 0
