"""Golden transcript replay through the command-line entry point."""

import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).resolve().parent / "data"


def load_jsonl(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").strip().split("\n")]


def softmax_by_hand(weights, flat):
    logits = []
    for row in weights:
        total = row[-1]
        for w, x in zip(row[:-1], flat):
            total += w * x
        logits.append(total)
    top = max(logits)
    exps = [math.exp(v - top) for v in logits]
    denom = sum(exps)
    return [e / denom for e in exps]


def replay():
    proc = subprocess.run(
        [
            sys.executable, "-m", "evidence_adapter",
            "--weights", str(DATA / "golden_weights.csv"),
            "--names", "alpha,beta,gamma",
            "--batch-limit", "4",
        ],
        input=(DATA / "golden_requests.jsonl").read_text(encoding="utf-8"),
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    return [json.loads(line) for line in proc.stdout.strip().split("\n")]


class TestGoldenTranscript:
    def test_replay_matches_recording(self):
        got = replay()
        want = load_jsonl(DATA / "golden_responses.jsonl")
        assert len(got) == len(want)
        for got_reply, want_reply in zip(got, want):
            assert got_reply.keys() == want_reply.keys()
            for key, value in want_reply.items():
                if key == "probs":
                    np.testing.assert_allclose(got_reply[key], value, atol=1e-9)
                else:
                    assert got_reply[key] == value

    def test_recorded_probs_match_loop_softmax(self):
        # the recording itself must agree with an independent softmax
        weights = [
            [float(v) for v in line.split(",")]
            for line in (DATA / "golden_weights.csv").read_text(encoding="utf-8").strip().split("\n")
        ]
        requests = load_jsonl_safe(DATA / "golden_requests.jsonl")
        responses = load_jsonl(DATA / "golden_responses.jsonl")
        checked = 0
        for request, response in zip(requests, responses):
            if request is None or request.get("type") != "predict":
                continue
            if response["type"] != "probs":
                continue
            for flat, got in zip(request["inputs"], response["probs"]):
                want = softmax_by_hand(weights, flat)
                assert max(abs(g - w) for g, w in zip(got, want)) < 1e-9
                checked += 1
        assert checked >= 3

    def test_every_recorded_prob_row_sums_to_one(self):
        for reply in load_jsonl(DATA / "golden_responses.jsonl"):
            if reply["type"] != "probs":
                continue
            for row in reply["probs"]:
                assert sum(row) == pytest.approx(1.0, abs=1e-6)
                assert all(v >= 0.0 for v in row)


def load_jsonl_safe(path):
    out = []
    for line in path.read_text(encoding="utf-8").strip().split("\n"):
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError:
            out.append(None)
    return out


class TestCliErrors:
    def test_missing_weights_file(self):
        proc = subprocess.run(
            [sys.executable, "-m", "evidence_adapter", "--weights", "/nonexistent-weights.csv"],
            capture_output=True,
            text=True,
            timeout=60,
        )
        assert proc.returncode == 2
        assert "error" in proc.stderr

    def test_requires_a_model_source(self):
        proc = subprocess.run(
            [sys.executable, "-m", "evidence_adapter"],
            capture_output=True,
            text=True,
            timeout=60,
        )
        assert proc.returncode == 2

    def test_bad_model_module(self):
        proc = subprocess.run(
            [sys.executable, "-m", "evidence_adapter", "--model", "no_such_module_xyz"],
            capture_output=True,
            text=True,
            timeout=60,
        )
        assert proc.returncode == 2
