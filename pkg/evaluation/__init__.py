"""Evaluation package: metrics, ensembling, inference and report files."""

from .metrics import (F1_CONVENTION, F1Scores, MetricsReport, PredictionSet, confusion_matrix, evaluate,
                      f1_mean, f1_scores, topk_accuracy)
from .ensemble import ensemble_scores, softmax_rows
from .inference import predict_sequences
from .report import (align_predictions, read_predictions, report_document, write_confusion_csv,
                     write_evaluation, write_predictions, write_report)
from skeleton.bones import to_bone

__all__ = [
    'F1_CONVENTION',
    'F1Scores',
    'MetricsReport',
    'PredictionSet',
    'confusion_matrix',
    'evaluate',
    'f1_mean',
    'f1_scores',
    'topk_accuracy',
    'ensemble_scores',
    'softmax_rows',
    'predict_sequences',
    'align_predictions',
    'read_predictions',
    'report_document',
    'write_confusion_csv',
    'write_evaluation',
    'write_predictions',
    'write_report',
    'to_bone',
]
