"""Linear-softmax reference model loaded from a weights CSV."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["reference_linear_model"]


def reference_linear_model(path: str | Path):
    """Build a model callable from a (C, features+1) CSV, last column biases.

    The callable flattens each input row-major, applies logits = x·Wᵀ + b
    with max-logit stabilization, and returns one softmax row per input.
    """
    table = np.loadtxt(path, delimiter=",", ndmin=2)
    if table.shape[0] < 2 or table.shape[1] < 2:
        raise ValueError(
            f"{path}: need at least 2 class rows and a bias column, got shape {table.shape}"
        )
    weights = table[:, :-1]
    biases = table[:, -1]

    def model(batch):
        flat = np.stack([np.asarray(m, dtype=np.float64).ravel() for m in batch])
        if flat.shape[1] != weights.shape[1]:
            raise ValueError(
                f"input has {flat.shape[1]} values, weights expect {weights.shape[1]}"
            )
        logits = flat @ weights.T + biases
        logits -= logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        return exp / exp.sum(axis=1, keepdims=True)

    model.class_count = int(weights.shape[0])
    return model
