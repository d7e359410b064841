"""
Tests for the schedule, AdamW, checkpoints and the training loop.
"""

import json
import os
import zipfile

import numpy as np
import pytest

from config import RunConfig, TrainConfig
from engine import Tensor
from errors import ConfigurationError, DataError, DimensionError, NonFiniteError, SchemaError
from network import MmnModel, toy_config
from training import (AdamState, AdamW, CheckpointManager, TrainState, Trainer, adamw_step, check_compatibility,
                      clip_grad_norm, load_model, loss_trace, lr_at, train)
from training.schedule import epoch_position
from training.trainer import EPOCH_LOG


@pytest.fixture
def schedule_cfg():
    return TrainConfig(base_lr=1e-3, min_lr=1e-5, warmup_start_lr=1e-6, warmup_epochs=10, cosine_cycles=2,
                       epochs=50)


def test_warmup_is_linear(schedule_cfg):
    assert lr_at(0, schedule_cfg) == pytest.approx(1e-6)
    assert lr_at(5, schedule_cfg) == pytest.approx(1e-6 + 0.5 * (1e-3 - 1e-6))
    assert lr_at(10, schedule_cfg) == pytest.approx(1e-3)


def test_cosine_cycles_restart(schedule_cfg):
    mid = 1e-5 + 0.5 * (1e-3 - 1e-5)
    assert lr_at(20, schedule_cfg) == pytest.approx(mid)
    assert lr_at(29.999, schedule_cfg) == pytest.approx(1e-5, abs=1e-8)
    assert lr_at(30, schedule_cfg) == pytest.approx(1e-3)
    assert lr_at(40, schedule_cfg) == pytest.approx(mid)


def test_default_schedule_values():
    cfg = TrainConfig()
    assert lr_at(0, cfg) == pytest.approx(1e-7, rel=1e-12)
    assert lr_at(cfg.warmup_epochs, cfg) == pytest.approx(1e-4, rel=1e-12)
    cycle = (cfg.epochs - cfg.warmup_epochs) / cfg.cosine_cycles
    for k in range(1, cfg.cosine_cycles + 1):
        end = cfg.warmup_epochs + k * cycle
        assert abs(lr_at(end - 1e-9, cfg) - 1e-6) < 1e-12
    assert lr_at(cfg.epochs, cfg) == pytest.approx(1e-6, abs=1e-12)


def test_schedule_ends_at_min_lr(schedule_cfg):
    assert lr_at(50, schedule_cfg) == pytest.approx(1e-5)
    assert lr_at(75, schedule_cfg) == pytest.approx(1e-5)


def test_schedule_stays_in_range(schedule_cfg):
    rates = [lr_at(e / 4, schedule_cfg) for e in range(0, 220)]
    assert min(rates) >= 1e-6 and max(rates) <= 1e-3 + 1e-15


def test_step_schedule_interpolates(schedule_cfg):
    assert epoch_position(3, 2, 4, schedule_cfg) == 3.0
    schedule_cfg.step_schedule = True
    assert epoch_position(3, 2, 4, schedule_cfg) == 3.5


def test_train_config_rejects_inverted_warmup():
    with pytest.raises(ConfigurationError):
        TrainConfig(warmup_start_lr=1e-3, base_lr=1e-4).validate()


def test_first_adamw_step_moves_by_lr():
    cfg = TrainConfig(weight_decay=0.0, eps=1e-8)
    params = {"w": np.array([1.0, -2.0, 3.0])}
    grads = {"w": np.array([0.5, -4.0, 0.0])}
    adamw_step(params, grads, AdamState(), 0.1, cfg)
    np.testing.assert_allclose(params["w"], [0.9, -1.9, 3.0], atol=1e-7)


def test_weight_decay_is_decoupled():
    cfg = TrainConfig(weight_decay=0.1)
    params = {"w": np.array([2.0])}
    adamw_step(params, {"w": np.array([0.0])}, AdamState(), 0.5, cfg)
    np.testing.assert_allclose(params["w"], [2.0 - 0.5 * 0.1 * 2.0])


def test_non_finite_gradient_updates_nothing():
    cfg = TrainConfig()
    params = {"a": np.array([1.0]), "b": np.array([1.0])}
    state = AdamState()
    with pytest.raises(NonFiniteError) as info:
        adamw_step(params, {"a": np.array([0.1]), "b": np.array([np.inf])}, state, 0.1, cfg)
    assert info.value.source == "b"
    assert params["a"][0] == 1.0 and state.t == 0


def test_gradient_shape_mismatch():
    with pytest.raises(DimensionError):
        adamw_step({"a": np.zeros(2)}, {"a": np.zeros(3)}, AdamState(), 0.1, TrainConfig())


def test_global_norm_clipping():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_grad_norm(grads, 1.0) == pytest.approx(5.0)
    total = np.sqrt(grads["a"] ** 2 + grads["b"] ** 2)
    assert total[0] == pytest.approx(1.0, rel=1e-9)


def test_missing_gradient_counts_as_zero():
    param = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    optimizer = AdamW({"p": param}, TrainConfig(weight_decay=0.0))
    optimizer.step(0.1)
    np.testing.assert_array_equal(param.data, [1.0, 2.0])
    assert optimizer.state.t == 1


def test_optimizer_state_round_trip():
    param = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    optimizer = AdamW({"p": param}, TrainConfig())
    param.grad = np.array([0.3, -0.2])
    optimizer.step(0.01)
    arrays = optimizer.state_arrays()
    assert set(arrays) == {"m/p", "v/p"}
    other = AdamW({"p": param}, TrainConfig())
    other.load_state_arrays(arrays, optimizer.state.t)
    np.testing.assert_array_equal(other.state.m["p"], optimizer.state.m["p"])
    with pytest.raises(DimensionError):
        other.load_state_arrays({"m/q": np.zeros(2)}, 1)


@pytest.mark.parametrize("seed", range(10))
def test_one_small_step_lowers_the_loss(seed):
    model = MmnModel(toy_config(init_seed=seed))
    model.train()
    rng = np.random.default_rng(100 + seed)
    frames = rng.normal(size=(4, 8, 5, 2))
    labels = rng.integers(0, 3, size=4)
    optimizer = AdamW(dict(model.named_parameters()), TrainConfig(weight_decay=0.0))
    before, _ = model.loss(frames, labels)
    optimizer.zero_grad()
    before.backward()
    optimizer.step(1e-5)
    after, _ = model.loss(frames, labels)
    assert after.item() < before.item()


def _warm(model, frames):
    model.train()
    model.set_rng(np.random.default_rng(0))
    model(frames)
    return model


def test_checkpoint_restores_predictions(tmp_path, toy_frames):
    model = _warm(MmnModel(toy_config()), toy_frames)
    manager = CheckpointManager(str(tmp_path / "ckpt"))
    state = TrainState(epoch=3, best_val_f1_mean=0.5)
    path = manager.save("unit", model, {}, state)
    assert path.endswith("unit.ckpt")
    assert manager.list_checkpoints() == [path]
    restored, restored_state = load_model(path)
    np.testing.assert_allclose(restored.predict(toy_frames), model.predict(toy_frames))
    assert restored_state.epoch == 3 and restored_state.best_val_f1_mean == 0.5
    assert restored.config == model.config


def test_checkpoint_is_a_zip_of_arrays(tmp_path, toy_frames):
    model = _warm(MmnModel(toy_config()), toy_frames)
    path = CheckpointManager(str(tmp_path)).save("unit", model)
    with zipfile.ZipFile(path) as archive:
        names = archive.namelist()
    assert "manifest.txt" in names
    assert "param/head.W.npy" in names
    assert any(name.endswith(".running_mean.npy") for name in names)
    assert "train_state.json" not in names


def test_checkpoint_rejects_other_architecture(tmp_path, toy_frames):
    model = _warm(MmnModel(toy_config()), toy_frames)
    path = CheckpointManager(str(tmp_path)).save("unit", model)
    with pytest.raises(SchemaError):
        CheckpointManager.load(path, MmnModel(toy_config(msm_enabled=False)))


def test_missing_and_corrupt_checkpoints(tmp_path):
    with pytest.raises(DataError):
        CheckpointManager.read_config(str(tmp_path / "absent.ckpt"))
    bogus = tmp_path / "bogus.ckpt"
    bogus.write_text("not a zip")
    with pytest.raises(SchemaError):
        CheckpointManager.read_config(str(bogus))


def test_compatibility_checks(tiny_dataset):
    splits, taxonomy = tiny_dataset
    model = MmnModel(toy_config(num_classes=4))
    with pytest.raises(ConfigurationError):
        check_compatibility(model, splits["train"], taxonomy)
    with pytest.raises(DataError):
        check_compatibility(MmnModel(toy_config()), [], taxonomy)
    with pytest.raises(ConfigurationError):
        check_compatibility(MmnModel(toy_config(num_joints=6)), splits["train"], None)


def test_fit_logs_every_epoch_and_saves_checkpoints(toy_run, tiny_dataset):
    splits, taxonomy = tiny_dataset
    trainer = Trainer(toy_run, splits["train"], splits["val"], taxonomy)
    state = trainer.fit()
    assert state.epoch == 2
    with open(os.path.join(toy_run.out, EPOCH_LOG)) as f:
        records = [json.loads(line) for line in f]
    assert [r["epoch"] for r in records] == [0, 1]
    assert records[0]["lr"] == pytest.approx(lr_at(0, toy_run.train))
    for record in records:
        assert {"train_loss", "train_top1", "val_top1", "val_f1_mean"} <= set(record)
        assert np.isfinite(record["train_loss"])
    names = {os.path.basename(p) for p in trainer.checkpoints.list_checkpoints()}
    assert {"epoch_000.ckpt", "epoch_001.ckpt", "last.ckpt", "best.ckpt"} <= names
    assert loss_trace(state.history) == [r["train_loss"] for r in records]
    assert state.best_epoch in (0, 1)


def test_resume_matches_uninterrupted_run(toy_run, tiny_dataset, tmp_path):
    splits, taxonomy = tiny_dataset
    straight = Trainer(toy_run, splits["train"], splits["val"], taxonomy, out_dir=str(tmp_path / "straight"))
    straight.fit()

    first = Trainer(toy_run, splits["train"], splits["val"], taxonomy, out_dir=str(tmp_path / "split"))
    first.fit(epochs=1)
    resumed = Trainer(toy_run, splits["train"], splits["val"], taxonomy, out_dir=str(tmp_path / "split"))
    resumed.resume(first.checkpoints.path_for("last"))
    resumed.fit()

    a = dict(straight.model.named_parameters())
    b = dict(resumed.model.named_parameters())
    for name in a:
        np.testing.assert_allclose(a[name].data, b[name].data, rtol=0, atol=1e-12)
    assert [r["train_loss"] for r in straight.state.history] == pytest.approx(
        [r["train_loss"] for r in resumed.state.history], abs=1e-12)


def test_resume_needs_training_state(toy_run, tiny_dataset, tmp_path, toy_frames):
    splits, taxonomy = tiny_dataset
    path = CheckpointManager(str(tmp_path)).save("bare", _warm(MmnModel(toy_config()), toy_frames))
    trainer = Trainer(toy_run, splits["train"], splits["val"], taxonomy)
    with pytest.raises(ConfigurationError):
        trainer.resume(path)


def test_multithreaded_batches_match_serial(toy_run, tiny_dataset, tmp_path):
    splits, taxonomy = tiny_dataset
    serial = Trainer(toy_run, splits["train"], splits["val"], taxonomy, out_dir=str(tmp_path / "a"), num_threads=1)
    threaded = Trainer(toy_run, splits["train"], splits["val"], taxonomy, out_dir=str(tmp_path / "b"),
                       num_threads=3)
    serial.fit(epochs=1)
    threaded.fit(epochs=1)
    assert serial.state.history[0]["train_loss"] == threaded.state.history[0]["train_loss"]


@pytest.mark.slow
def test_training_learns_separable_synthetic_data(tmp_path):
    from skeleton import SynthSpec, split_sequences, synth_generate

    spec = SynthSpec(num_classes=4, per_class=40, num_joints=6, raw_len=32, raw_len_jitter=8, amplitude=0.5,
                     noise_sigma=0.005, seed=1)
    sequences, taxonomy = synth_generate(spec)
    splits = split_sequences(sequences, seed=0)
    run = RunConfig(
        model=toy_config(num_joints=6, num_classes=4, num_frames=16, channels=16),
        train=TrainConfig(epochs=15, warmup_epochs=2, cosine_cycles=1, batch_size=16, base_lr=3e-3,
                          min_lr=1e-5, warmup_start_lr=1e-4, weight_decay=0.01, seed=0),
        out=str(tmp_path),
    ).validate()
    trainer = train(run, splits["train"], splits["val"], taxonomy)
    losses = loss_trace(trainer.state.history)
    assert losses[-1] < losses[0]
    assert trainer.state.history[-1]["train_top1"] >= 0.5
