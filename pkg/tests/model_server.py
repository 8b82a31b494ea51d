"""Scriptable model process for exercising the stdio protocol client.

Runs one of several behaviors chosen by argv[1]:

  ok          well-behaved 3-class model (scores derive from the input mean)
  drift       probability rows off by ~1e-5 (repairable)
  badsum      probability rows off by 0.02 (beyond repair)
  wrong-id    replies with id + 1
  error-reply answers every predict with a protocol error message
  silent      answers info, then never replies to predict
  garbage     emits a non-JSON line instead of a reply
  no-info     exits immediately

Kept intentionally separate from any shipped code so protocol tests do not
validate the client against itself.
"""

import json
import sys
import time


def emit(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def probs_for(flat, mode):
    mean = sum(flat) / len(flat) if flat else 0.0
    a = 1.0 / (3.0 + abs(mean))
    b = 2.0 * a * 0.7
    row = [a, b, 1.0 - a - b]
    if mode == "drift":
        row = [p + 1e-5 / 3.0 for p in row]
    elif mode == "badsum":
        row = [p + 0.02 / 3.0 for p in row]
    return row


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "ok"
    if mode == "no-info":
        return 0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        rid = req.get("id", -1)
        if req["type"] == "info":
            emit({"type": "info", "id": rid, "classes": 3, "names": ["a", "b", "c"], "batch_limit": 4})
            continue
        if mode == "silent":
            time.sleep(3600)
        if mode == "wrong-id":
            emit({"type": "probs", "id": rid + 1, "probs": [[0.2, 0.3, 0.5]] * len(req["inputs"])})
            continue
        if mode == "error-reply":
            emit({"type": "error", "id": rid, "message": "synthetic failure"})
            continue
        if mode == "garbage":
            sys.stdout.write("not json at all\n")
            sys.stdout.flush()
            continue
        emit({
            "type": "probs",
            "id": rid,
            "probs": [probs_for(flat, mode) for flat in req["inputs"]],
        })
    return 0


if __name__ == "__main__":
    sys.exit(main())
