"""
Shared fixtures: a toy network configuration and a tiny synthetic dataset.
"""

import numpy as np
import pytest

from config import RunConfig, TrainConfig
from network import MmnModel, toy_config
from skeleton import SynthSpec, split_sequences, synth_generate


def settle(model: MmnModel) -> MmnModel:
    """Give every batch norm identity running statistics so eval mode works."""
    for state in model.batch_norm_states().values():
        state.settle()
    return model


@pytest.fixture
def toy_cfg():
    return toy_config()


@pytest.fixture
def toy_model(toy_cfg):
    return settle(MmnModel(toy_cfg))


@pytest.fixture
def toy_frames(toy_cfg):
    rng = np.random.default_rng(3)
    return rng.normal(size=(2, toy_cfg.num_frames, toy_cfg.num_joints, toy_cfg.in_channels))


@pytest.fixture
def tiny_dataset():
    """Three classes on five joints, six samples per class."""
    spec = SynthSpec(num_classes=3, per_class=6, num_joints=5, raw_len=20, raw_len_jitter=4, seed=11)
    sequences, taxonomy = synth_generate(spec)
    return split_sequences(sequences, seed=0), taxonomy


@pytest.fixture
def toy_run(tmp_path):
    run = RunConfig(
        model=toy_config(),
        train=TrainConfig(epochs=2, warmup_epochs=1, cosine_cycles=1, batch_size=4, base_lr=1e-3,
                          min_lr=1e-5, warmup_start_lr=1e-4, weight_decay=0.01, seed=5),
        out=str(tmp_path / "run"),
    )
    return run.validate()
