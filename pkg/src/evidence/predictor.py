"""Black-box classifier boundary.

A predictor maps a batch of l x d matrices to per-class probability rows.
This module defines the contract, validates and repairs probability rows,
ships two synthetic in-process predictors for testing and demos, and speaks
a line-delimited JSON protocol to external model processes over stdio.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
import warnings
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

__all__ = [
    "PredictorError",
    "SpawnError",
    "HandshakeError",
    "ProtocolError",
    "PredictTimeoutError",
    "InvalidProbabilityError",
    "PredictorInfo",
    "Predictor",
    "coerce_probabilities",
    "planted_rows_predictor",
    "linear_softmax_predictor",
    "uniform_predictor",
    "SubprocessPredictor",
    "connect_subprocess",
]

# A row summing within REPAIR_TOL of 1 is renormalized with a warning;
# anything further off is rejected.
SUM_TOL = 1e-6
REPAIR_TOL = 1e-3


class PredictorError(RuntimeError):
    """Base class for predictor boundary failures."""


class SpawnError(PredictorError):
    """The model process could not be started."""


class HandshakeError(PredictorError):
    """The model process gave no usable info reply."""


class ProtocolError(PredictorError):
    """The model process broke the wire protocol or reported an error."""


class PredictTimeoutError(PredictorError):
    """No reply arrived within the configured timeout."""


class InvalidProbabilityError(PredictorError):
    """A probability row was outside the repairable tolerance."""


@dataclass(frozen=True)
class PredictorInfo:
    """Static facts about a classifier."""

    class_count: int
    class_names: tuple[str, ...] | None = None
    batch_limit: int = 64

    def __post_init__(self) -> None:
        if self.class_count < 2:
            raise ValueError(f"need at least 2 classes, got {self.class_count}")
        if self.batch_limit < 1:
            raise ValueError(f"batch_limit must be positive, got {self.batch_limit}")
        if self.class_names is not None and len(self.class_names) != self.class_count:
            raise ValueError(
                f"{len(self.class_names)} names for {self.class_count} classes"
            )


class Predictor(Protocol):
    """What the engine requires of a classifier."""

    def info(self) -> PredictorInfo: ...

    def predict(self, batch: Sequence[np.ndarray]) -> np.ndarray: ...


def coerce_probabilities(rows, class_count: int | None = None, where: str = "predictor") -> np.ndarray:
    """Validate a (batch, classes) probability array, repairing tiny drift.

    Rows whose sum is within SUM_TOL of 1 pass untouched. Rows off by at
    most REPAIR_TOL are renormalized with a warning. Anything worse, or any
    negative or non-finite entry, raises InvalidProbabilityError naming the
    offending row.
    """
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidProbabilityError(f"{where}: expected a 2-D probability array, got shape {arr.shape}")
    if class_count is not None and arr.shape[1] != class_count:
        raise InvalidProbabilityError(
            f"{where}: expected {class_count} classes per row, got {arr.shape[1]}"
        )
    if arr.shape[1] < 2:
        raise InvalidProbabilityError(f"{where}: need at least 2 classes, got {arr.shape[1]}")
    if not np.isfinite(arr).all():
        bad = int(np.argwhere(~np.isfinite(arr).all(axis=1))[0][0])
        raise InvalidProbabilityError(f"{where}: non-finite probability in row {bad}: {arr[bad].tolist()}")
    if (arr < 0).any():
        bad = int(np.argwhere((arr < 0).any(axis=1))[0][0])
        raise InvalidProbabilityError(f"{where}: negative probability in row {bad}: {arr[bad].tolist()}")
    sums = arr.sum(axis=1)
    drift = np.abs(sums - 1.0)
    if (drift > REPAIR_TOL).any():
        bad = int(np.argmax(drift))
        raise InvalidProbabilityError(
            f"{where}: row {bad} sums to {sums[bad]:.9f}, beyond repair tolerance {REPAIR_TOL}: "
            f"{arr[bad].tolist()}"
        )
    needs_repair = drift > SUM_TOL
    if needs_repair.any():
        worst = float(drift.max())
        warnings.warn(
            f"{where}: renormalized {int(needs_repair.sum())} probability row(s), "
            f"worst drift {worst:.3g}",
            stacklevel=2,
        )
        arr = arr.copy()
        arr[needs_repair] /= sums[needs_repair, None]
    return arr


def _sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


class _PlantedRowsPredictor:
    """Two-class predictor keyed to the mean magnitude of planted rows."""

    def __init__(self, rows: tuple[int, ...], steepness: float, bias: float):
        self._rows = rows
        self._k = steepness
        self._b = bias

    def info(self) -> PredictorInfo:
        return PredictorInfo(class_count=2, class_names=("other", "planted"))

    def predict(self, batch: Sequence[np.ndarray]) -> np.ndarray:
        out = np.empty((len(batch), 2), dtype=np.float64)
        for i, mat in enumerate(batch):
            mat = np.asarray(mat, dtype=np.float64)
            if mat.ndim != 2:
                raise ValueError(f"input {i} is not a matrix: shape {mat.shape}")
            if self._rows[-1] >= mat.shape[0]:
                raise ValueError(
                    f"planted row {self._rows[-1]} out of range for {mat.shape[0]}-row input"
                )
            mean_abs = float(np.abs(mat[self._rows, :]).mean())
            p1 = _sigmoid(self._k * (mean_abs - self._b))
            out[i, 0] = 1.0 - p1
            out[i, 1] = p1
        return out


def planted_rows_predictor(salient_rows: Sequence[int], steepness: float = 10.0, bias: float = 0.5):
    """Synthetic classifier that only looks at a fixed set of rows.

    Class 1 probability is sigmoid(steepness * (mean |M[rows]| - bias)), so
    masking the planted rows pushes the score toward class 0 and every other
    row is ignored entirely.
    """
    rows = tuple(sorted({int(r) for r in salient_rows}))
    if not rows:
        raise ValueError("salient row set is empty")
    if rows[0] < 0:
        raise ValueError(f"negative row index {rows[0]}")
    if steepness <= 0:
        raise ValueError("steepness must be positive")
    return _PlantedRowsPredictor(rows, float(steepness), float(bias))


class _LinearSoftmaxPredictor:
    """softmax(W @ flat(M) + b) over flattened inputs."""

    def __init__(self, weights: np.ndarray, biases: np.ndarray, names: tuple[str, ...] | None):
        self._w = weights
        self._b = biases
        self._names = names

    def info(self) -> PredictorInfo:
        return PredictorInfo(class_count=self._w.shape[0], class_names=self._names)

    def predict(self, batch: Sequence[np.ndarray]) -> np.ndarray:
        flats = np.stack([np.asarray(m, dtype=np.float64).reshape(-1) for m in batch])
        if flats.shape[1] != self._w.shape[1]:
            raise ValueError(
                f"flattened input has {flats.shape[1]} values, weights expect {self._w.shape[1]}"
            )
        logits = flats @ self._w.T + self._b
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)


def linear_softmax_predictor(weights, biases, class_names: Sequence[str] | None = None):
    """Deterministic linear classifier over the flattened matrix."""
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(biases, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError(f"weights must be 2-D (classes, l*d), got shape {w.shape}")
    if b.shape != (w.shape[0],):
        raise ValueError(f"biases shape {b.shape} does not match {w.shape[0]} classes")
    if w.shape[0] < 2:
        raise ValueError("need at least 2 classes")
    names = tuple(class_names) if class_names is not None else None
    return _LinearSoftmaxPredictor(w, b, names)


class _UniformPredictor:
    """Input-ignoring predictor: every row is 1/C. Useful as a null model."""

    def __init__(self, class_count: int):
        self._c = class_count

    def info(self) -> PredictorInfo:
        return PredictorInfo(class_count=self._c)

    def predict(self, batch: Sequence[np.ndarray]) -> np.ndarray:
        return np.full((len(batch), self._c), 1.0 / self._c, dtype=np.float64)


def uniform_predictor(class_count: int = 2):
    """Null classifier carrying no information about its input."""
    if class_count < 2:
        raise ValueError("need at least 2 classes")
    return _UniformPredictor(int(class_count))


class SubprocessPredictor:
    """Client for an external model process speaking line-delimited JSON.

    One request is in flight at a time; ids increase from 0 and every reply
    must echo the request id. The child's stderr passes straight through.
    Any protocol violation or timeout tears the child down, since a
    desynchronized stream cannot be trusted afterwards.
    """

    def __init__(self, command: Sequence[str], timeout: float = 120.0):
        if not command:
            raise SpawnError("empty model command")
        self._timeout = float(timeout)
        self._lock = threading.Lock()
        self._next_id = 0
        self._closed = False
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SpawnError(f"cannot spawn model process {list(command)!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        reply = self._roundtrip({"type": "info"}, failure=HandshakeError)
        if reply.get("type") != "info":
            self._fail(HandshakeError(f"expected an info reply, got {reply!r}"))
        classes = reply.get("classes")
        if not isinstance(classes, int) or classes < 2:
            self._fail(HandshakeError(f"bad class count in info reply: {classes!r}"))
        names = reply.get("names")
        if names is not None:
            if not isinstance(names, list) or len(names) != classes:
                self._fail(HandshakeError(f"bad class names in info reply: {names!r}"))
            names = tuple(str(n) for n in names)
        batch_limit = reply.get("batch_limit", 64)
        if not isinstance(batch_limit, int) or batch_limit < 1:
            self._fail(HandshakeError(f"bad batch_limit in info reply: {batch_limit!r}"))
        self._info = PredictorInfo(class_count=classes, class_names=names, batch_limit=batch_limit)

    def _pump(self) -> None:
        stdout = self._proc.stdout
        assert stdout is not None
        for line in stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _fail(self, exc: PredictorError):
        self.close()
        raise exc

    def _roundtrip(self, payload: dict, failure: type[PredictorError] = ProtocolError) -> dict:
        with self._lock:
            if self._closed:
                raise failure("model process already closed")
            rid = self._next_id
            self._next_id += 1
            payload = dict(payload)
            payload["id"] = rid
            stdin = self._proc.stdin
            assert stdin is not None
            try:
                stdin.write(json.dumps(payload) + "\n")
                stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                self._fail(failure(f"model process pipe broke on request id {rid}: {exc}"))
            try:
                line = self._lines.get(timeout=self._timeout)
            except queue.Empty:
                self._fail(
                    PredictTimeoutError(f"no reply within {self._timeout}s for request id {rid}")
                )
            if line is None:
                code = self._proc.poll()
                self._fail(failure(f"model process closed stdout (exit code {code})"))
            try:
                reply = json.loads(line)
            except json.JSONDecodeError:
                self._fail(failure(f"model process sent invalid JSON: {line!r}"))
            if not isinstance(reply, dict):
                self._fail(failure(f"model process sent a non-object reply: {reply!r}"))
            if reply.get("id") != rid:
                self._fail(
                    failure(f"reply id {reply.get('id')!r} does not match request id {rid}: {reply!r}")
                )
            if reply.get("type") == "error":
                self._fail(failure(f"model process error for id {rid}: {reply.get('message')!r}"))
            return reply

    def info(self) -> PredictorInfo:
        return self._info

    def predict(self, batch: Sequence[np.ndarray]) -> np.ndarray:
        mats = [np.asarray(m, dtype=np.float64) for m in batch]
        if not mats:
            return np.zeros((0, self._info.class_count), dtype=np.float64)
        rows, cols = mats[0].shape
        for i, m in enumerate(mats):
            if m.ndim != 2 or m.shape != (rows, cols):
                raise ValueError(f"input {i} has shape {m.shape}, expected ({rows}, {cols})")
        outputs = []
        limit = self._info.batch_limit
        for start in range(0, len(mats), limit):
            chunk = mats[start : start + limit]
            payload = {
                "type": "predict",
                "rows": rows,
                "cols": cols,
                "inputs": [m.reshape(-1).tolist() for m in chunk],
            }
            reply = self._roundtrip(payload)
            if reply.get("type") != "probs":
                self._fail(ProtocolError(f"expected a probs reply, got {reply!r}"))
            probs = reply.get("probs")
            if not isinstance(probs, list) or len(probs) != len(chunk):
                self._fail(
                    ProtocolError(
                        f"expected {len(chunk)} probability rows, got "
                        f"{len(probs) if isinstance(probs, list) else probs!r}"
                    )
                )
            try:
                coerced = coerce_probabilities(
                    probs, class_count=self._info.class_count, where=f"reply id {reply['id']}"
                )
            except InvalidProbabilityError:
                self.close()
                raise
            outputs.append(coerced)
        return np.vstack(outputs)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        proc = self._proc
        if proc.stdin is not None:
            try:
                proc.stdin.close()
            except OSError:
                pass
        try:
            proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait(timeout=5.0)

    def __enter__(self) -> "SubprocessPredictor":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def __del__(self) -> None:
        try:
            self.close()
        except Exception:
            pass


def connect_subprocess(command: Sequence[str], timeout: float = 120.0) -> SubprocessPredictor:
    """Spawn an external model process and perform the info handshake."""
    return SubprocessPredictor(command, timeout=timeout)
