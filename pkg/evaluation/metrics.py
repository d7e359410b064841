"""
Classification metrics at action and body granularity.

Conventions:
    - Top-k ranks classes by score with ties going to the lower class index.
    - Per-class F1 uses F1 = 0 when precision and recall are both 0/0.
    - Macro F1 averages over the classes present in labels or predictions;
      classes absent from both are left out of the denominator.
    - Micro F1 is computed globally and equals top-1 accuracy.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix as sk_confusion_matrix
from sklearn.metrics import f1_score

from errors import ConfigurationError, DataError
from skeleton.sequence import LabelTaxonomy

logger = logging.getLogger(__name__)

GRANULARITY_ACTION = "action"
GRANULARITY_BODY = "body"

F1_CONVENTION = ("per-class F1 is 0 when precision and recall are 0/0; macro F1 averages over classes "
                 "present in labels or predictions; micro F1 equals top-1 accuracy")


@dataclass
class PredictionSet:
    """Per-sample scores [N, K] with their true action labels."""

    scores: np.ndarray
    labels: np.ndarray
    ids: List[str] = field(default_factory=list)
    taxonomy: Optional[LabelTaxonomy] = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not self.ids:
            self.ids = [str(i) for i in range(len(self.labels))]

    @property
    def num_classes(self) -> int:
        return self.scores.shape[1]

    def __len__(self) -> int:
        return len(self.labels)

    def validate(self) -> "PredictionSet":
        """
        Check shapes, label range and finiteness.

        Raises:
            DataError: Naming the first offending sample
        """
        if self.scores.ndim != 2 or self.scores.shape[0] != len(self.labels) or len(self.ids) != len(self.labels):
            raise DataError(f"scores {self.scores.shape}, {len(self.labels)} labels and {len(self.ids)} ids disagree")
        for i, label in enumerate(self.labels):
            if not 0 <= label < self.num_classes:
                raise DataError(f"sample {self.ids[i]}: label {int(label)} outside [0, {self.num_classes})")
        bad = np.where(~np.all(np.isfinite(self.scores), axis=1))[0]
        if len(bad):
            raise DataError(f"sample {self.ids[bad[0]]}: non-finite scores")
        return self

    def predictions(self) -> np.ndarray:
        """Argmax action per sample; np.argmax returns the lowest index among ties."""
        return np.argmax(self.scores, axis=1)

    def body_view(self):
        """(body labels, body predictions) derived from the action argmax."""
        preds = self.predictions()
        if self.taxonomy is None:
            return self.labels, preds
        return self.taxonomy.body_labels(self.labels), self.taxonomy.body_labels(preds)


@dataclass
class F1Scores:
    macro: float
    micro: float
    per_class: np.ndarray
    classes: List[int]


@dataclass
class MetricsReport:
    """Every rate lies in [0, 1]."""

    top1_action: float
    top5_action: float
    top1_body: float
    f1_macro_body: float
    f1_micro_body: float
    f1_macro_action: float
    f1_micro_action: float
    f1_mean: float
    per_class_f1_action: np.ndarray
    per_class_f1_body: np.ndarray
    confusion: np.ndarray
    num_samples: int = 0

    RATE_FIELDS = (
        "top1_action", "top5_action", "top1_body",
        "f1_macro_body", "f1_micro_body", "f1_macro_action", "f1_micro_action", "f1_mean",
    )

    def rates(self) -> Dict[str, float]:
        return {name: float(getattr(self, name)) for name in self.RATE_FIELDS}

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = self.rates()
        data["per_class_f1_action"] = self.per_class_f1_action.tolist()
        data["per_class_f1_body"] = self.per_class_f1_body.tolist()
        data["confusion"] = self.confusion.tolist()
        data["num_samples"] = self.num_samples
        return data


def topk_accuracy(preds: PredictionSet, k: int) -> float:
    """
    Fraction of samples whose label is among the k best-scored classes.

    Args:
        preds: Prediction set
        k: Number of ranked classes; values above K are clipped to K

    Returns:
        Rate in [0, 1]
    """
    if k < 1:
        raise ConfigurationError(f"k must be at least 1, got {k}")
    if len(preds) == 0:
        return 0.0
    k = min(k, preds.num_classes)
    ranked = np.argsort(-preds.scores, axis=1, kind="stable")[:, :k]
    hits = (ranked == preds.labels[:, None]).any(axis=1)
    return float(hits.mean())


def _label_f1(labels: np.ndarray, predictions: np.ndarray, num_classes: int) -> F1Scores:
    if len(labels) == 0:
        return F1Scores(0.0, 0.0, np.zeros(num_classes), [])
    present = sorted(set(labels.tolist()) | set(predictions.tolist()))
    values = f1_score(labels, predictions, labels=present, average=None, zero_division=0)
    per_class = np.zeros(num_classes)
    per_class[present] = values
    micro = f1_score(labels, predictions, average="micro", zero_division=0)
    return F1Scores(float(np.mean(values)), float(micro), per_class, present)


def f1_scores(preds: PredictionSet, granularity: str = GRANULARITY_ACTION) -> F1Scores:
    """
    Macro, micro and per-class F1.

    Args:
        preds: Prediction set
        granularity: "action", or "body" to map labels and argmax predictions
            through the taxonomy first

    Returns:
        F1Scores; per_class has one entry per class of the granularity

    Raises:
        ConfigurationError: For an unknown granularity
    """
    if granularity == GRANULARITY_ACTION:
        return _label_f1(preds.labels, preds.predictions(), preds.num_classes)
    elif granularity == GRANULARITY_BODY:
        labels, predictions = preds.body_view()
        num_bodies = preds.taxonomy.num_bodies if preds.taxonomy is not None else preds.num_classes
        return _label_f1(labels, predictions, num_bodies)
    else:
        raise ConfigurationError(f"Unknown granularity: {granularity}")


def f1_mean(components: Sequence[float]) -> float:
    """Arithmetic mean of (macro body, micro body, macro action, micro action)."""
    if len(components) != 4:
        raise ConfigurationError(f"f1_mean takes four components, got {len(components)}")
    return float(sum(components)) / 4.0


def confusion_matrix(preds: PredictionSet) -> np.ndarray:
    """Entry (i, j) counts samples of true class i predicted as j."""
    if len(preds) == 0:
        return np.zeros((preds.num_classes, preds.num_classes), dtype=np.int64)
    return sk_confusion_matrix(preds.labels, preds.predictions(), labels=list(range(preds.num_classes)))


def evaluate(preds: PredictionSet) -> MetricsReport:
    """Compute the full metric suite of a prediction set."""
    preds.validate()
    action = f1_scores(preds, GRANULARITY_ACTION)
    body = f1_scores(preds, GRANULARITY_BODY)
    body_labels, body_preds = preds.body_view()
    top1_body = float((body_labels == body_preds).mean()) if len(preds) else 0.0
    report = MetricsReport(
        top1_action=topk_accuracy(preds, 1),
        top5_action=topk_accuracy(preds, 5),
        top1_body=top1_body,
        f1_macro_body=body.macro,
        f1_micro_body=body.micro,
        f1_macro_action=action.macro,
        f1_micro_action=action.micro,
        f1_mean=f1_mean([body.macro, body.micro, action.macro, action.micro]),
        per_class_f1_action=action.per_class,
        per_class_f1_body=body.per_class,
        confusion=confusion_matrix(preds),
        num_samples=len(preds),
    )
    logger.info(f"Evaluated {len(preds)} samples: top1={report.top1_action:.4f} f1_mean={report.f1_mean:.4f}")
    return report
