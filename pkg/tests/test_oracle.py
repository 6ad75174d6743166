import threading

import numpy as np
import pytest

from evoba import (
    ClassifierOracle,
    ContractViolationError,
    ImageTensor,
    PredictionResult,
)


class ConstantClassifier:
    def __init__(self, probs):
        self.probs = probs

    def predict(self, img):
        return PredictionResult.from_probabilities(self.probs)


class FailingClassifier:
    def predict(self, img):
        raise RuntimeError("backend down")


def some_image():
    return ImageTensor(np.full((2, 2, 1), 0.5))


class TestPredictionResult:
    def test_valid_vector(self):
        r = PredictionResult.from_probabilities([0.1, 0.7, 0.2])
        assert r.predicted_class == 1
        assert r.top_probability == pytest.approx(0.7)
        assert r.num_classes == 3

    def test_tie_breaks_to_smallest_index(self):
        r = PredictionResult.from_probabilities([0.25, 0.25, 0.25, 0.25])
        assert r.predicted_class == 0
        r = PredictionResult.from_probabilities([0.2, 0.4, 0.4])
        assert r.predicted_class == 1

    def test_rejects_bad_sum(self):
        with pytest.raises(ContractViolationError):
            PredictionResult.from_probabilities([0.5, 0.6])

    def test_rejects_negative(self):
        with pytest.raises(ContractViolationError):
            PredictionResult.from_probabilities([-0.1, 1.1])

    def test_probabilities_read_only(self):
        r = PredictionResult.from_probabilities([0.5, 0.5])
        with pytest.raises(ValueError):
            r.probabilities[0] = 0.9


class TestClassifierOracle:
    def test_single_call_counts_one(self):
        oracle = ClassifierOracle(ConstantClassifier([0.9, 0.1]))
        assert oracle.query_count == 0
        oracle.query(some_image())
        assert oracle.query_count == 1

    def test_n_calls_count_n(self):
        oracle = ClassifierOracle(ConstantClassifier([0.9, 0.1]))
        img = some_image()
        for n in range(1, 26):
            oracle.query(img)
            assert oracle.query_count == n

    def test_deterministic_repeat(self):
        oracle = ClassifierOracle(ConstantClassifier([0.3, 0.3, 0.4]))
        img = some_image()
        a = oracle.query(img)
        b = oracle.query(img)
        assert a.predicted_class == b.predicted_class
        assert np.array_equal(a.probabilities, b.probabilities)

    def test_errors_propagate_without_counting(self):
        oracle = ClassifierOracle(FailingClassifier())
        with pytest.raises(RuntimeError):
            oracle.query(some_image())
        assert oracle.query_count == 0

    def test_concurrent_count_exact(self):
        oracle = ClassifierOracle(ConstantClassifier([0.5, 0.5]))
        img = some_image()
        per_thread = 200

        def worker():
            for _ in range(per_thread):
                oracle.query(img)

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert oracle.query_count == 8 * per_thread

    def test_requires_predict_method(self):
        with pytest.raises(ContractViolationError):
            ClassifierOracle(object())
