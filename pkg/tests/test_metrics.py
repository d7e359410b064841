"""
Tests for top-k accuracy, F1 at both granularities, ensembling and report files.
"""

import csv
import json

import numpy as np
import pytest

from errors import ConfigurationError, DataError, ParseError
from evaluation import (PredictionSet, align_predictions, confusion_matrix, ensemble_scores, evaluate, f1_mean,
                        f1_scores, predict_sequences, read_predictions, report_document, softmax_rows,
                        topk_accuracy, write_evaluation, write_predictions)
from skeleton import LabelTaxonomy


@pytest.fixture
def taxonomy():
    return LabelTaxonomy(action_names=["wave", "nod", "tap"], body_of_action=[0, 1, 1], body_names=["hand", "head"])


def _one_hot(predictions, num_classes=3):
    scores = np.zeros((len(predictions), num_classes))
    scores[np.arange(len(predictions)), predictions] = 1.0
    return scores


def test_top1_ties_go_to_lower_index():
    preds = PredictionSet(np.array([[1.0, 1.0, 0.0]]), [1])
    assert topk_accuracy(preds, 1) == 0.0
    assert topk_accuracy(preds, 2) == 1.0
    assert preds.predictions()[0] == 0


def test_topk_clips_to_class_count():
    preds = PredictionSet(np.array([[0.1, 0.5, 0.4], [0.9, 0.05, 0.05]]), [2, 1])
    assert topk_accuracy(preds, 5) == 1.0
    assert topk_accuracy(preds, 1) == 0.0


def test_topk_needs_positive_k():
    with pytest.raises(ConfigurationError):
        topk_accuracy(PredictionSet(np.zeros((1, 3)), [0]), 0)


def test_f1_known_values():
    preds = PredictionSet(_one_hot([0, 1, 1, 1]), [0, 0, 1, 1])
    scores = f1_scores(preds, "action")
    assert scores.per_class[0] == pytest.approx(2.0 / 3.0)
    assert scores.per_class[1] == pytest.approx(0.8)
    # class 2 never occurs, so it is left out of the macro average
    assert scores.classes == [0, 1]
    assert scores.macro == pytest.approx((2.0 / 3.0 + 0.8) / 2.0)
    assert scores.micro == pytest.approx(0.75)


def test_micro_f1_equals_top1():
    rng = np.random.default_rng(0)
    preds = PredictionSet(rng.normal(size=(40, 3)), rng.integers(0, 3, size=40))
    assert f1_scores(preds).micro == pytest.approx(topk_accuracy(preds, 1))


def test_predicted_but_absent_class_counts_with_zero(taxonomy):
    preds = PredictionSet(_one_hot([0, 2]), [0, 0], taxonomy=taxonomy)
    scores = f1_scores(preds, "action")
    assert scores.classes == [0, 2]
    assert scores.per_class[2] == 0.0
    assert scores.macro == pytest.approx((2.0 / 3.0 + 0.0) / 2.0)


def test_body_level_uses_taxonomy(taxonomy):
    # nod predicted as tap is still the right body part
    preds = PredictionSet(_one_hot([2, 0]), [1, 0], taxonomy=taxonomy)
    body = f1_scores(preds, "body")
    assert body.micro == 1.0
    assert len(body.per_class) == 2
    report = evaluate(preds)
    assert report.top1_action == 0.5
    assert report.top1_body == 1.0


def test_unknown_granularity():
    with pytest.raises(ConfigurationError):
        f1_scores(PredictionSet(np.zeros((1, 3)), [0]), "frame")


def test_f1_mean_of_four_components():
    assert f1_mean([0.2, 0.4, 0.6, 0.8]) == pytest.approx(0.5)
    with pytest.raises(ConfigurationError):
        f1_mean([0.2, 0.4])


def test_confusion_matrix_counts(taxonomy):
    preds = PredictionSet(_one_hot([0, 1, 1, 2]), [0, 0, 1, 2], taxonomy=taxonomy)
    matrix = confusion_matrix(preds)
    np.testing.assert_array_equal(matrix, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])
    assert matrix.sum() == 4


def test_perfect_predictions(taxonomy):
    report = evaluate(PredictionSet(_one_hot([0, 1, 2, 1]), [0, 1, 2, 1], taxonomy=taxonomy))
    for value in report.rates().values():
        assert value == pytest.approx(1.0)


def test_non_finite_scores_name_the_sample():
    preds = PredictionSet(np.array([[0.0, 1.0], [np.nan, 0.0]]), [1, 0], ids=["a", "b"])
    with pytest.raises(DataError, match="b"):
        evaluate(preds)


def test_label_outside_classes():
    with pytest.raises(DataError):
        PredictionSet(np.zeros((1, 2)), [2]).validate()


def test_ensemble_weights():
    a = PredictionSet(np.array([[2.0, 0.0]]), [0], ids=["x"])
    b = PredictionSet(np.array([[0.0, 2.0]]), [0], ids=["x"])
    np.testing.assert_allclose(ensemble_scores(a, b, 1.0).scores, softmax_rows(a.scores))
    blended = ensemble_scores(a, b, 0.5).scores
    np.testing.assert_allclose(blended, [[0.5, 0.5]])


def test_ensemble_rejects_misaligned_sets():
    a = PredictionSet(np.zeros((2, 2)), [0, 1], ids=["x", "y"])
    b = PredictionSet(np.zeros((2, 2)), [0, 1], ids=["y", "x"])
    with pytest.raises(DataError):
        ensemble_scores(a, b)
    with pytest.raises(DataError):
        ensemble_scores(a, PredictionSet(np.zeros((2, 3)), [0, 1], ids=["x", "y"]))
    with pytest.raises(ConfigurationError):
        ensemble_scores(a, a, 1.5)


def test_prediction_file_round_trip_and_alignment(tmp_path):
    preds = PredictionSet(np.array([[0.1, 0.9], [0.7, 0.3]]), [1, 0], ids=["p", "q"])
    path = str(tmp_path / "preds.jsonl")
    write_predictions(path, preds)
    ids, scores = read_predictions(path)
    assert ids == ["p", "q"]
    reference = PredictionSet(np.zeros((2, 2)), [0, 1], ids=["q", "p"])
    aligned = align_predictions(ids, scores, reference)
    np.testing.assert_allclose(aligned.scores, [[0.7, 0.3], [0.1, 0.9]])
    np.testing.assert_array_equal(aligned.labels, [0, 1])


def test_alignment_reports_missing_sample():
    reference = PredictionSet(np.zeros((1, 2)), [0], ids=["z"])
    with pytest.raises(DataError, match="z"):
        align_predictions(["a"], np.zeros((1, 2)), reference)


def test_malformed_prediction_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "scores": [0.1, 0.9]}\n{"id": "b"}\n')
    with pytest.raises(ParseError) as info:
        read_predictions(str(path))
    assert info.value.line == 2


def test_report_files(tmp_path, taxonomy):
    preds = PredictionSet(_one_hot([0, 1, 1]), [0, 1, 2], ids=["a", "b", "c"], taxonomy=taxonomy)
    report = evaluate(preds)
    paths = write_evaluation(str(tmp_path), preds, report, extra={"split": "test"})
    with open(paths["report"]) as f:
        document = json.load(f)
    assert document["top1_action"] == pytest.approx(66.67)
    assert document["raw"]["top1_action"] == pytest.approx(2.0 / 3.0)
    assert document["split"] == "test"
    assert document["num_samples"] == 3
    with open(paths["confusion"]) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["true\\pred", "wave", "nod", "tap"]
    assert rows[3] == ["tap", "0", "1", "0"]


def test_report_document_scales_rates(taxonomy):
    report = evaluate(PredictionSet(_one_hot([0, 1]), [0, 1], taxonomy=taxonomy))
    document = report_document(report)
    assert document["f1_mean"] == 100.0
    assert "f1_convention" in document


def test_predict_sequences_keeps_dataset_order(toy_model, tiny_dataset):
    splits, taxonomy = tiny_dataset
    preds = predict_sequences(toy_model, splits["test"], taxonomy, batch_size=2)
    assert preds.ids == [s.sample_id for s in splits["test"]]
    assert preds.scores.shape == (len(splits["test"]), 3)
    np.testing.assert_array_equal(preds.labels, [s.label for s in splits["test"]])


def _counting_f1(labels, predictions):
    present = sorted(set(labels.tolist()) | set(predictions.tolist()))
    per_class = {}
    for c in present:
        tp = int(np.sum((labels == c) & (predictions == c)))
        fp = int(np.sum((labels != c) & (predictions == c)))
        fn = int(np.sum((labels == c) & (predictions != c)))
        per_class[c] = 2.0 * tp / (2 * tp + fp + fn)
    macro = sum(per_class.values()) / len(per_class)
    micro = float(np.mean(labels == predictions))
    return macro, micro, per_class


def _counting_topk(scores, labels, k):
    hits = 0
    for row, label in zip(scores, labels):
        # ties rank the lower class index first
        rank = sum(1 for j, s in enumerate(row) if s > row[label] or (s == row[label] and j < label))
        hits += rank < k
    return hits / len(labels)


def test_metrics_match_counting_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        num_classes = int(rng.integers(2, 7))
        num_samples = int(rng.integers(1, 16))
        num_bodies = int(rng.integers(1, num_classes + 1))
        body_of_action = [int(b) for b in rng.integers(0, num_bodies, size=num_classes)]
        taxonomy = LabelTaxonomy([f"a{c}" for c in range(num_classes)], body_of_action,
                                 [f"b{b}" for b in range(num_bodies)])
        # small integer scores make ties common
        scores = rng.integers(0, 4, size=(num_samples, num_classes)).astype(np.float64)
        labels = rng.integers(0, num_classes, size=num_samples)
        preds = PredictionSet(scores, labels, taxonomy=taxonomy)
        predictions = np.argmax(scores, axis=1)

        for k in (1, 2, 5):
            assert topk_accuracy(preds, k) == pytest.approx(_counting_topk(scores, labels, k), abs=1e-12)

        macro, micro, per_class = _counting_f1(labels, predictions)
        action = f1_scores(preds, "action")
        assert action.macro == pytest.approx(macro, abs=1e-12)
        assert action.micro == pytest.approx(micro, abs=1e-12)
        for c, value in per_class.items():
            assert action.per_class[c] == pytest.approx(value, abs=1e-12)

        body_map = np.asarray(body_of_action)
        macro_b, micro_b, _ = _counting_f1(body_map[labels], body_map[predictions])
        body = f1_scores(preds, "body")
        assert body.macro == pytest.approx(macro_b, abs=1e-12)
        assert body.micro == pytest.approx(micro_b, abs=1e-12)

        expected = np.zeros((num_classes, num_classes), dtype=np.int64)
        for label, predicted in zip(labels, predictions):
            expected[label, predicted] += 1
        np.testing.assert_array_equal(confusion_matrix(preds), expected)


def test_f1_mean_of_published_components():
    assert round(f1_mean([71.25, 77.77, 48.56, 61.33]), 2) == 64.73
    assert f1_mean([0.4, 0.4, 0.4, 0.4]) == pytest.approx(0.4)


def test_report_files_keep_non_ascii_names(tmp_path):
    taxonomy = LabelTaxonomy(action_names=["señal", "zögern"], body_of_action=[0, 0], body_names=["mano"])
    preds = PredictionSet(_one_hot([0, 1], num_classes=2), [0, 1], ids=["muestra-ñ", "muestra-ü"], taxonomy=taxonomy)
    paths = write_evaluation(str(tmp_path), preds, evaluate(preds))
    ids, _ = read_predictions(paths["predictions"])
    assert ids == ["muestra-ñ", "muestra-ü"]
    with open(paths["confusion"], encoding="utf-8") as f:
        assert next(csv.reader(f))[1:] == ["señal", "zögern"]
