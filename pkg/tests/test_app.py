"""
End-to-end tests of the command-line entry point on a tiny synthetic dataset.
"""

import json
import os

import pytest

from app import build_parser, collect_overrides, main

TOY_FLAGS = ["--num-frames", "8", "--channels", "8", "--blocks-per-stage", "1", "--num-stages", "2",
             "--dropout", "0"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Generate a dataset and train one epoch, shared by the tests below."""
    root = tmp_path_factory.mktemp("cli")
    data = str(root / "data")
    run = str(root / "run")
    assert main(["synth-gen", "--out", data, "--classes", "3", "--per-class", "6", "--joints", "5",
                 "--raw-len", "20", "--seed", "3"]) == 0
    assert main(["train", "--dataset", data, "--out", run, "--epochs", "1", "--batch", "4",
                 "--warmup-epochs", "0"] + TOY_FLAGS) == 0
    return {"root": root, "data": data, "run": run,
            "checkpoint": os.path.join(run, "checkpoints", "best.ckpt")}


def test_synth_gen_writes_splits(workspace):
    for split in ("train", "val", "test"):
        assert os.path.isfile(os.path.join(workspace["data"], f"{split}.jsonl"))


def test_synth_gen_refuses_to_overwrite(workspace):
    assert main(["synth-gen", "--out", workspace["data"], "--classes", "3", "--joints", "5"]) == 2


def test_synth_gen_marks_inseparable_data(tmp_path):
    out = str(tmp_path / "flat")
    assert main(["synth-gen", "--out", out, "--classes", "2", "--per-class", "4", "--joints", "4",
                 "--raw-len", "20", "--amplitude", "0"]) == 0
    with open(os.path.join(out, "train.jsonl")) as f:
        header = json.loads(f.readline())
    assert "inseparable" in header["comment"]


def test_train_outputs(workspace):
    run = workspace["run"]
    with open(os.path.join(run, "train_log.jsonl")) as f:
        assert len(f.readlines()) == 1
    with open(os.path.join(run, "config.txt")) as f:
        lines = f.read().splitlines()
    assert "model.num_joints=5" in lines
    assert "model.channels=8" in lines
    assert os.path.isfile(workspace["checkpoint"])


def test_eval_writes_report(workspace, tmp_path):
    out = str(tmp_path / "eval")
    assert main(["eval", "--dataset", workspace["data"], "--checkpoint", workspace["checkpoint"],
                 "--out", out]) == 0
    with open(os.path.join(out, "report.json")) as f:
        report = json.load(f)
    assert report["num_samples"] == 3
    assert 0.0 <= report["f1_mean"] <= 100.0
    assert os.path.isfile(os.path.join(out, "predictions.jsonl"))
    assert os.path.isfile(os.path.join(out, "confusion.csv"))


def test_eval_two_stream_ensemble(workspace, tmp_path):
    out = str(tmp_path / "ensemble")
    assert main(["eval", "--dataset", workspace["data"], "--checkpoint", workspace["checkpoint"],
                 "--checkpoint-b", workspace["checkpoint"], "--modality-b", "bone", "--out", out]) == 0
    for name in ("a_report.json", "b_report.json", "report.json"):
        assert os.path.isfile(os.path.join(out, name))


def test_eval_from_prediction_files(workspace, tmp_path):
    first = str(tmp_path / "first")
    assert main(["eval", "--dataset", workspace["data"], "--checkpoint", workspace["checkpoint"],
                 "--out", first]) == 0
    predictions = os.path.join(first, "predictions.jsonl")
    out = str(tmp_path / "files")
    assert main(["eval", "--dataset", workspace["data"], "--predictions-a", predictions,
                 "--predictions-b", predictions, "--weight", "0.3", "--out", out]) == 0
    with open(os.path.join(out, "report.json")) as f:
        assert json.load(f)["weight"] == 0.3


@pytest.mark.parametrize("checkpoint", [None, "missing.ckpt"])
def test_eval_without_checkpoint_is_usage_error(workspace, tmp_path, checkpoint):
    args = ["eval", "--dataset", workspace["data"], "--out", str(tmp_path)]
    if checkpoint:
        args += ["--checkpoint", str(tmp_path / checkpoint)]
    assert main(args) == 2


def test_inspect_exports_every_block(workspace, tmp_path):
    out = str(tmp_path / "maps")
    assert main(["inspect", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["data"],
                 "--sample", "0", "--out", out]) == 0
    with open(os.path.join(out, "feature_maps.jsonl")) as f:
        records = [json.loads(line) for line in f]
    assert [(r["stage"], r["block"]) for r in records] == [(0, 0), (1, 0)]
    assert records[0]["shape"] == [8, 5]
    assert records[1]["shape"] == [4, 5]


def test_inspect_bad_block_index(workspace, tmp_path):
    assert main(["inspect", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["data"],
                 "--stage", "0", "--block", "4", "--out", str(tmp_path)]) == 1


def test_bench_writes_report(tmp_path):
    out = str(tmp_path / "bench")
    assert main(["bench", "--out", out, "--runs", "2", "--num-joints", "5", "--num-classes", "3"] + TOY_FLAGS) == 0
    with open(os.path.join(out, "bench.json")) as f:
        bench = json.load(f)
    assert bench["params"] > 0
    assert bench["reference"]["params_m"] == 1.23
    assert bench["latency_ms_median"] > 0


def test_unknown_preset_fails_validation(tmp_path):
    assert main(["bench", "--out", str(tmp_path), "--runs", "1", "--preset", "Z9"]) == 1


def test_overrides_are_collected_by_section():
    args = build_parser().parse_args(["train", "--channels", "16", "--seed", "4", "--batch", "8",
                                      "--skeletal-enabled", "false"])
    overrides = collect_overrides(args)
    assert overrides["model.channels"] == "16"
    assert overrides["train.seed"] == 4
    assert overrides["train.batch_size"] == 8
    assert overrides["augment.skeletal_enabled"] == "false"


@pytest.mark.slow
def test_gradcheck_command(capsys):
    assert main(["gradcheck"]) == 0
    assert capsys.readouterr().out.startswith("PASS")
