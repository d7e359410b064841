"""
Tests for configuration resolution.
"""

import pytest

from config import Config, ModelConfig, RunConfig, coerce_value, dataclass_from_lines, dataclass_to_lines
from errors import ConfigurationError


def test_defaults_validate():
    run = Config.resolve()
    assert run.model.channels == 64
    assert run.train.warmup_epochs == 20
    assert run.modality == "joint"


def test_precedence(tmp_path):
    path = tmp_path / "run.txt"
    path.write_text("# comment\nmodel.channels=32\ntrain.epochs=7\npreset=A1\n")
    run = Config.resolve(str(path), overrides={"train.epochs": "9"}, defaults={"model.num_joints": 12})
    assert run.model.channels == 32
    assert run.train.epochs == 9
    assert run.model.num_joints == 12
    assert run.preset == "A1"
    assert not run.model.msm_enabled and not run.model.mtm_enabled


def test_explicit_preset_beats_file_preset(tmp_path):
    path = tmp_path / "run.txt"
    path.write_text("preset=A1\n")
    run = Config.resolve(str(path), preset="B3")
    assert run.preset == "B3"
    assert run.model.modulation_strategy == "add"


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("MMN_SEED", "42")
    assert Config.resolve().train.seed == 42


def test_unknown_key():
    with pytest.raises(ConfigurationError, match="unknown config key"):
        Config.resolve(overrides={"model.width": 3})


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        Config.resolve(preset="Z9")


def test_malformed_config_line(tmp_path):
    path = tmp_path / "run.txt"
    path.write_text("channels 32\n")
    with pytest.raises(ConfigurationError):
        Config.resolve(str(path))


def test_invalid_value_is_reported():
    with pytest.raises(ConfigurationError):
        Config.resolve(overrides={"channels": "lots"})
    with pytest.raises(ConfigurationError):
        Config.resolve(overrides={"channels": "30"})


@pytest.mark.parametrize("text, current, expected", [
    ("true", False, True),
    ("off", True, False),
    ("5", 1, 5),
    ("0.5", 1.0, 0.5),
    ("3x5", (3, 3), (3, 5)),
    ("0.8,1.2", (0.9, 1.1), (0.8, 1.2)),
])
def test_coerce_value(text, current, expected):
    assert coerce_value(text, current, "key") == expected


def test_model_config_lines_round_trip():
    cfg = ModelConfig(channels=16, mtm_kernel=(3, 5), shared_branch_input=True, dropout=0.25)
    assert dataclass_from_lines(ModelConfig, dataclass_to_lines(cfg)) == cfg


def test_write_config(tmp_path):
    run = Config.resolve(preset="C2")
    path = Config.write_config(run, str(tmp_path))
    lines = open(path).read().splitlines()
    assert "augment.temporal_enabled=false" in lines
    assert "preset=C2" in lines


def test_every_preset_resolves():
    for preset in Config.get_presets():
        run = Config.resolve(preset=preset["id"])
        assert isinstance(run, RunConfig)


def test_pyramid_may_end_on_a_single_frame():
    cfg = ModelConfig(num_frames=8, num_stages=4, num_joints=5, channels=8, num_classes=3).validate()
    assert cfg.reduced_frames == 1
    with pytest.raises(ConfigurationError):
        ModelConfig(num_frames=12, num_stages=4).validate()
