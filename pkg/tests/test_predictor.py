"""Probability contracts, synthetic predictors, subprocess protocol client."""

import math
import sys

import numpy as np
import pytest

from evidence.predictor import (
    HandshakeError,
    InvalidProbabilityError,
    PredictorInfo,
    PredictTimeoutError,
    ProtocolError,
    SpawnError,
    coerce_probabilities,
    connect_subprocess,
    linear_softmax_predictor,
    planted_rows_predictor,
    uniform_predictor,
)

from conftest import MODEL_SERVER


def server_cmd(mode):
    return [sys.executable, str(MODEL_SERVER), mode]


class TestCoerceProbabilities:
    def test_exact_rows_untouched(self):
        rows = [[0.25, 0.75], [1.0, 0.0]]
        out = coerce_probabilities(rows)
        np.testing.assert_array_equal(out, rows)

    def test_tiny_drift_repaired_with_warning(self):
        rows = [[0.5 + 5e-5, 0.5]]
        with pytest.warns(UserWarning, match="renormalized"):
            out = coerce_probabilities(rows)
        assert out.sum() == pytest.approx(1.0, abs=1e-15)

    def test_drift_within_1e6_not_repaired(self):
        rows = [[0.5 + 4e-7, 0.5]]
        out = coerce_probabilities(rows)
        np.testing.assert_array_equal(out, rows)

    def test_large_drift_rejected_naming_row(self):
        rows = [[0.5, 0.5], [0.7, 0.7]]
        with pytest.raises(InvalidProbabilityError, match="row 1"):
            coerce_probabilities(rows)

    def test_negative_rejected(self):
        with pytest.raises(InvalidProbabilityError, match="negative"):
            coerce_probabilities([[1.1, -0.1]])

    def test_nan_rejected(self):
        with pytest.raises(InvalidProbabilityError, match="non-finite"):
            coerce_probabilities([[float("nan"), 1.0]])

    def test_class_count_enforced(self):
        with pytest.raises(InvalidProbabilityError, match="classes"):
            coerce_probabilities([[0.5, 0.5]], class_count=3)


class TestPredictorInfo:
    def test_validation(self):
        with pytest.raises(ValueError):
            PredictorInfo(class_count=1)
        with pytest.raises(ValueError):
            PredictorInfo(class_count=2, batch_limit=0)
        with pytest.raises(ValueError):
            PredictorInfo(class_count=2, class_names=("a",))


class TestPlantedRowsPredictor:
    def test_zeroed_salient_rows_force_known_score(self):
        # With rows S zeroed, p(class 1) = sigmoid(-k*b) no matter the rest.
        pred = planted_rows_predictor([1, 3], steepness=10.0, bias=0.5)
        rng = np.random.default_rng(0)
        mats = []
        for _ in range(5):
            m = rng.uniform(0.1, 1.0, size=(6, 4))
            m[[1, 3], :] = 0.0
            mats.append(m)
        probs = pred.predict(mats)
        expected = 1.0 / (1.0 + math.exp(10.0 * 0.5))
        np.testing.assert_allclose(probs[:, 1], expected, rtol=1e-12)

    def test_depends_only_on_salient_rows(self):
        pred = planted_rows_predictor([2], steepness=5.0, bias=0.3)
        rng = np.random.default_rng(1)
        a = rng.uniform(size=(5, 3))
        b = rng.uniform(size=(5, 3))
        b[2] = a[2]
        pa, pb = pred.predict([a, b])
        np.testing.assert_array_equal(pa, pb)

    def test_logistic_value(self):
        # S={2}, k=10, b=0.5, row 2 all ones: p1 = 1/(1+e^-5).
        pred = planted_rows_predictor([2], steepness=10.0, bias=0.5)
        mat = np.zeros((4, 6))
        mat[2] = 1.0
        p = pred.predict([mat])[0]
        assert p[1] == pytest.approx(1.0 / (1.0 + math.exp(-5.0)), rel=1e-12)
        assert p[1] == pytest.approx(0.99331, abs=5e-6)
        assert p.sum() == pytest.approx(1.0, abs=1e-15)

    def test_batch_invariance(self):
        pred = planted_rows_predictor([0, 1], steepness=8.0)
        rng = np.random.default_rng(2)
        mats = [rng.uniform(size=(4, 4)) for _ in range(3)]
        together = pred.predict(mats)
        separate = np.vstack([pred.predict([m]) for m in mats])
        np.testing.assert_allclose(together, separate, atol=1e-9)

    def test_rejects_empty_and_bad_rows(self):
        with pytest.raises(ValueError):
            planted_rows_predictor([])
        with pytest.raises(ValueError):
            planted_rows_predictor([-1])
        pred = planted_rows_predictor([10])
        with pytest.raises(ValueError, match="out of range"):
            pred.predict([np.zeros((4, 4))])


class TestLinearSoftmaxPredictor:
    def test_zero_weights_uniform(self):
        pred = linear_softmax_predictor(np.zeros((3, 8)), np.zeros(3))
        probs = pred.predict([np.ones((2, 4))])
        np.testing.assert_allclose(probs[0], [1 / 3] * 3, rtol=1e-15)

    def test_softmax_by_hand(self):
        # logits [0, ln 3] -> [0.25, 0.75]
        w = np.zeros((2, 2))
        b = np.array([0.0, math.log(3.0)])
        pred = linear_softmax_predictor(w, b)
        probs = pred.predict([np.zeros((1, 2))])
        np.testing.assert_allclose(probs[0], [0.25, 0.75], rtol=1e-12)

    def test_bias_shift_invariance(self):
        rng = np.random.default_rng(3)
        w = rng.normal(size=(3, 6))
        b = rng.normal(size=3)
        mats = [rng.normal(size=(2, 3)) for _ in range(4)]
        p1 = linear_softmax_predictor(w, b).predict(mats)
        p2 = linear_softmax_predictor(w, b + 11.5).predict(mats)
        np.testing.assert_allclose(p1, p2, atol=1e-12)

    def test_batch_invariance(self):
        rng = np.random.default_rng(4)
        w = rng.normal(size=(4, 10))
        b = rng.normal(size=4)
        pred = linear_softmax_predictor(w, b)
        mats = [rng.normal(size=(5, 2)) for _ in range(6)]
        together = pred.predict(mats)
        separate = np.vstack([pred.predict([m]) for m in mats])
        np.testing.assert_allclose(together, separate, atol=1e-9)

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            linear_softmax_predictor(np.zeros((3, 4)), np.zeros(2))
        pred = linear_softmax_predictor(np.zeros((2, 4)), np.zeros(2))
        with pytest.raises(ValueError, match="weights expect"):
            pred.predict([np.zeros((3, 3))])


class TestUniformPredictor:
    def test_constant_rows(self):
        pred = uniform_predictor(4)
        probs = pred.predict([np.zeros((2, 2)), np.ones((2, 2))])
        np.testing.assert_array_equal(probs, np.full((2, 4), 0.25))


class TestSubprocessPredictor:
    def test_handshake_and_ordered_batch(self):
        with connect_subprocess(server_cmd("ok"), timeout=10.0) as pred:
            info = pred.info()
            assert info.class_count == 3
            assert info.class_names == ("a", "b", "c")
            assert info.batch_limit == 4
            mats = [np.full((2, 2), float(v)) for v in (1.0, 2.0, 3.0)]
            probs = pred.predict(mats)
            assert probs.shape == (3, 3)
            # server scores derive from the input mean, so order is observable
            expected_first = 1.0 / (3.0 + 1.0)
            assert probs[0, 0] == pytest.approx(expected_first, rel=1e-9)
            assert probs[1, 0] == pytest.approx(1.0 / 5.0, rel=1e-9)
            assert probs[2, 0] == pytest.approx(1.0 / 6.0, rel=1e-9)

    def test_batches_split_to_limit(self):
        # 10 inputs with batch_limit 4 -> three requests, one result per input.
        with connect_subprocess(server_cmd("ok"), timeout=10.0) as pred:
            mats = [np.full((2, 2), float(v)) for v in range(10)]
            probs = pred.predict(mats)
            assert probs.shape == (10, 3)
            for v in range(10):
                assert probs[v, 0] == pytest.approx(1.0 / (3.0 + v), rel=1e-9)

    def test_repairable_drift_renormalized(self):
        with connect_subprocess(server_cmd("drift"), timeout=10.0) as pred:
            with pytest.warns(UserWarning, match="renormalized"):
                probs = pred.predict([np.ones((2, 2))])
            np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_bad_probability_sum_rejected(self):
        with connect_subprocess(server_cmd("badsum"), timeout=10.0) as pred:
            with pytest.raises(InvalidProbabilityError, match="row 0"):
                pred.predict([np.ones((2, 2))])

    def test_id_mismatch_detected(self):
        with connect_subprocess(server_cmd("wrong-id"), timeout=10.0) as pred:
            with pytest.raises(ProtocolError, match="does not match"):
                pred.predict([np.ones((2, 2))])

    def test_error_reply_surfaces_message(self):
        with connect_subprocess(server_cmd("error-reply"), timeout=10.0) as pred:
            with pytest.raises(ProtocolError, match="synthetic failure"):
                pred.predict([np.ones((2, 2))])

    def test_timeout(self):
        with connect_subprocess(server_cmd("silent"), timeout=0.5) as pred:
            with pytest.raises(PredictTimeoutError, match="0.5"):
                pred.predict([np.ones((2, 2))])

    def test_garbage_reply(self):
        with connect_subprocess(server_cmd("garbage"), timeout=10.0) as pred:
            with pytest.raises(ProtocolError, match="invalid JSON"):
                pred.predict([np.ones((2, 2))])

    def test_spawn_failure(self):
        with pytest.raises(SpawnError):
            connect_subprocess(["/nonexistent-binary-for-test"], timeout=5.0)

    def test_no_handshake(self):
        with pytest.raises(HandshakeError):
            connect_subprocess(server_cmd("no-info"), timeout=5.0)

    def test_empty_batch(self):
        with connect_subprocess(server_cmd("ok"), timeout=10.0) as pred:
            probs = pred.predict([])
            assert probs.shape == (0, 3)
