"""
Prediction, report and confusion-matrix files.
"""

import csv
import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import DataError, ParseError
from evaluation.metrics import F1_CONVENTION, MetricsReport, PredictionSet

logger = logging.getLogger(__name__)


def display_rate(value: float) -> float:
    """A [0, 1] rate as a percentage rounded to two decimals."""
    return round(100.0 * float(value), 2)


def report_document(report: MetricsReport, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    JSON document of a report: display percentages at top level, full
    precision under "raw".
    """
    document: Dict[str, Any] = {name: display_rate(value) for name, value in report.rates().items()}
    document["per_class_f1_action"] = [display_rate(v) for v in report.per_class_f1_action]
    document["per_class_f1_body"] = [display_rate(v) for v in report.per_class_f1_body]
    document["num_samples"] = report.num_samples
    document["f1_convention"] = F1_CONVENTION
    document["raw"] = report.to_dict()
    if extra:
        document.update(extra)
    return document


def write_report(path: str, report: MetricsReport, extra: Optional[Dict[str, Any]] = None) -> str:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report_document(report, extra), f, indent=2)
    logger.info(f"Wrote report to {path}")
    return path


def write_predictions(path: str, preds: PredictionSet) -> str:
    """One JSON line per sample: {"id": str, "scores": [K floats]}."""
    with open(path, "w", encoding="utf-8") as f:
        for sample_id, row in zip(preds.ids, preds.scores):
            f.write(json.dumps({"id": sample_id, "scores": [float(s) for s in row]}) + "\n")
    logger.info(f"Wrote {len(preds)} predictions to {path}")
    return path


def read_predictions(path: str) -> Tuple[List[str], np.ndarray]:
    """
    Read a prediction file.

    Returns:
        (ids, scores [N, K])

    Raises:
        ParseError: On malformed lines, with the line number
    """
    ids: List[str] = []
    rows: List[List[float]] = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                ids.append(str(record["id"]))
                rows.append([float(s) for s in record["scores"]])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"{path}: malformed prediction record ({e})", line=number)
    if len({len(r) for r in rows}) > 1:
        raise DataError(f"{path}: prediction rows have differing class counts")
    return ids, np.array(rows, dtype=np.float64).reshape(len(rows), -1)


def align_predictions(ids: Sequence[str], scores: np.ndarray, reference: PredictionSet) -> PredictionSet:
    """Order file predictions like `reference` and attach its labels."""
    index = {sample_id: i for i, sample_id in enumerate(ids)}
    missing = [sample_id for sample_id in reference.ids if sample_id not in index]
    if missing:
        raise DataError(f"prediction file lacks sample {missing[0]}")
    order = [index[sample_id] for sample_id in reference.ids]
    return PredictionSet(scores[order], reference.labels.copy(), list(reference.ids), reference.taxonomy)


def write_confusion_csv(path: str, matrix: np.ndarray, class_names: Sequence[str]) -> str:
    """Rows are true classes, columns predicted classes, both headed by class names."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["true\\pred"] + list(class_names))
        for name, row in zip(class_names, matrix):
            writer.writerow([name] + [int(v) for v in row])
    logger.info(f"Wrote confusion matrix to {path}")
    return path


def write_evaluation(out_dir: str, preds: PredictionSet, report: MetricsReport, prefix: str = "",
                     extra: Optional[Dict[str, Any]] = None) -> Dict[str, str]:
    """Write predictions, report and confusion matrix under `out_dir`."""
    os.makedirs(out_dir, exist_ok=True)
    if preds.taxonomy is not None:
        names = list(preds.taxonomy.action_names)
    else:
        names = [str(k) for k in range(preds.num_classes)]
    return {
        "predictions": write_predictions(os.path.join(out_dir, f"{prefix}predictions.jsonl"), preds),
        "report": write_report(os.path.join(out_dir, f"{prefix}report.json"), report, extra),
        "confusion": write_confusion_csv(os.path.join(out_dir, f"{prefix}confusion.csv"), report.confusion, names),
    }
