"""Reference linear model against a plain-loop softmax."""

import math

import numpy as np
import pytest

from evidence_adapter.linear import reference_linear_model


def softmax_by_hand(weights, flat):
    """Scalar-at-a-time logits and softmax; shares nothing with the module."""
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


def write_weights(path, table):
    lines = [",".join(repr(float(v)) for v in row) for row in table]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestReferenceLinearModel:
    def test_zero_weights_give_uniform(self, tmp_path):
        table = np.zeros((3, 7))
        model = reference_linear_model(write_weights(tmp_path / "w.csv", table))
        probs = model([np.ones((2, 3)), np.zeros((2, 3))])
        np.testing.assert_allclose(probs, np.full((2, 3), 1 / 3), atol=1e-12)

    def test_matches_loop_softmax(self, tmp_path):
        rng = np.random.default_rng(6)
        table = rng.normal(scale=0.5, size=(4, 13))
        model = reference_linear_model(write_weights(tmp_path / "w.csv", table))
        for _ in range(20):
            matrix = rng.uniform(-1.0, 1.0, size=(3, 4))
            got = model([matrix])[0]
            want = softmax_by_hand(table.tolist(), matrix.ravel().tolist())
            np.testing.assert_allclose(got, want, atol=1e-12)

    def test_bias_shift_invariance(self, tmp_path):
        rng = np.random.default_rng(7)
        table = rng.normal(size=(3, 9))
        shifted = table.copy()
        shifted[:, -1] += 5.0
        a = reference_linear_model(write_weights(tmp_path / "a.csv", table))
        b = reference_linear_model(write_weights(tmp_path / "b.csv", shifted))
        matrix = rng.uniform(size=(2, 4))
        np.testing.assert_allclose(a([matrix]), b([matrix]), atol=1e-12)

    def test_large_logits_stay_finite(self, tmp_path):
        table = np.full((2, 5), 500.0)
        table[1] *= -1.0
        model = reference_linear_model(write_weights(tmp_path / "w.csv", table))
        probs = model([np.ones((2, 2))])
        assert np.isfinite(probs).all()
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_class_count_attribute(self, tmp_path):
        model = reference_linear_model(write_weights(tmp_path / "w.csv", np.zeros((5, 4))))
        assert model.class_count == 5

    def test_accepts_nested_lists(self, tmp_path):
        model = reference_linear_model(write_weights(tmp_path / "w.csv", np.zeros((2, 5))))
        probs = model([[[1.0, 2.0], [3.0, 4.0]]])
        np.testing.assert_allclose(probs, [[0.5, 0.5]], atol=1e-12)

    def test_single_class_file_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="2 class rows"):
            reference_linear_model(write_weights(tmp_path / "w.csv", np.zeros((1, 4))))

    def test_input_length_mismatch(self, tmp_path):
        model = reference_linear_model(write_weights(tmp_path / "w.csv", np.zeros((2, 5))))
        with pytest.raises(ValueError, match="weights expect 4"):
            model([np.ones((3, 3))])

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            reference_linear_model(tmp_path / "absent.csv")
