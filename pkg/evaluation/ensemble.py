"""
Score-level ensembling of two independently trained streams.
"""

import numpy as np

from errors import ConfigurationError, DataError
from evaluation.metrics import PredictionSet


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def ensemble_scores(a: PredictionSet, b: PredictionSet, weight: float = 0.5) -> PredictionSet:
    """
    Blend two prediction sets as w * softmax(a) + (1 - w) * softmax(b).

    Args:
        a: First stream (e.g. joints)
        b: Second stream (e.g. bones), same samples in the same order
        weight: Weight w of the first stream, in [0, 1]

    Returns:
        A prediction set carrying a's labels, ids and taxonomy

    Raises:
        DataError: If the sample ids or class counts differ
        ConfigurationError: If the weight is outside [0, 1]
    """
    if not 0.0 <= weight <= 1.0:
        raise ConfigurationError(f"ensemble weight must lie in [0, 1], got {weight}")
    if list(a.ids) != list(b.ids):
        mismatch = next((i for i, (x, y) in enumerate(zip(a.ids, b.ids)) if x != y), min(len(a.ids), len(b.ids)))
        raise DataError(f"prediction sets disagree on sample order at position {mismatch}")
    if a.num_classes != b.num_classes:
        raise DataError(f"prediction sets have {a.num_classes} and {b.num_classes} classes")
    scores = weight * softmax_rows(a.scores) + (1.0 - weight) * softmax_rows(b.scores)
    return PredictionSet(scores, a.labels.copy(), list(a.ids), a.taxonomy)
