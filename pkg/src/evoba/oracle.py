"""Query-counted black-box access to a classifier.

Attacks never see a model directly; they get a :class:`ClassifierOracle`
and observe nothing but :class:`PredictionResult` values. The oracle's
query count is the ground truth for every reported query budget.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError
from .tensor import ImageTensor

PROBABILITY_SUM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class PredictionResult:
    """Class probability vector plus its argmax.

    predicted_class is the smallest index attaining the maximum, so ties
    break deterministically.
    """

    probabilities: np.ndarray
    predicted_class: int
    top_probability: float

    @classmethod
    def from_probabilities(cls, probs) -> "PredictionResult":
        p = np.array(probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise ContractViolationError(
                f"probabilities must be a non-empty 1-d vector, got shape {p.shape}"
            )
        if p.min() < 0.0:
            raise ContractViolationError(
                f"probabilities must be non-negative, got min {p.min()}"
            )
        total = float(p.sum())
        if abs(total - 1.0) > PROBABILITY_SUM_TOL:
            raise ContractViolationError(
                f"probabilities must sum to 1 within {PROBABILITY_SUM_TOL}, got {total}"
            )
        p.setflags(write=False)
        k = int(np.argmax(p))  # np.argmax returns the first maximum
        return cls(probabilities=p, predicted_class=k, top_probability=float(p[k]))

    @property
    def num_classes(self) -> int:
        return int(self.probabilities.size)


class ClassifierOracle:
    """Wraps any classifier exposing predict(ImageTensor) -> PredictionResult.

    Every successful query increments the counter by exactly one; errors
    raised by the wrapped classifier propagate without being counted.
    The counter increment is lock-protected so concurrent querying still
    yields an exact total.
    """

    def __init__(self, classifier):
        if not hasattr(classifier, "predict"):
            raise ContractViolationError(
                "classifier must expose a predict(ImageTensor) method"
            )
        self._classifier = classifier
        self._lock = threading.Lock()
        self._query_count = 0

    @property
    def query_count(self) -> int:
        return self._query_count

    def query(self, img: ImageTensor) -> PredictionResult:
        result = self._classifier.predict(img)
        with self._lock:
            self._query_count += 1
        return result
