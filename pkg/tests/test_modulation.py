"""
Tests for standardization, modulation factors and the recombination strategies.
"""

import numpy as np
import pytest

from config import Config
from engine import Tensor
from errors import ConfigurationError, DimensionError
from network import (AddStrategy, ConcatStrategy, HadamardStrategy, ModulateStrategy, ModulationFactors,
                     NoScaleStrategy, NoShiftStrategy, get_modulation, modulate, standardize)


@pytest.fixture
def feature():
    return Tensor(np.random.default_rng(0).normal(loc=2.0, scale=3.0, size=(2, 6, 5, 4)))


def test_standardize_per_sample_and_channel(feature):
    out = standardize(feature).data
    np.testing.assert_allclose(out.mean(axis=(1, 2)), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.std(axis=(1, 2)), 1.0, atol=1e-6)


def test_standardize_constant_channel_is_zero():
    out = standardize(Tensor(np.full((1, 3, 2, 2), 7.0))).data
    np.testing.assert_array_equal(out, 0.0)


def test_standardize_with_foreign_statistics(feature):
    source = Tensor(np.random.default_rng(1).normal(size=feature.shape))
    out = standardize(feature, stats_source=source).data
    mu = source.data.mean(axis=(1, 2), keepdims=True)
    sigma = np.sqrt(source.data.var(axis=(1, 2), keepdims=True) + 1e-10)
    np.testing.assert_allclose(out, (feature.data - mu) / sigma)


def test_standardize_checks_source_channels(feature):
    with pytest.raises(DimensionError):
        standardize(feature, stats_source=Tensor(np.zeros((2, 6, 5, 3))))


def test_factors_split_channel_halves():
    z = Tensor(np.arange(8.0).reshape(1, 1, 1, 8))
    factors = ModulationFactors.from_z(z)
    np.testing.assert_array_equal(factors.gamma.data.ravel(), [0, 1, 2, 3])
    np.testing.assert_array_equal(factors.beta.data.ravel(), [4, 5, 6, 7])


def test_factors_need_even_channels():
    with pytest.raises(DimensionError):
        ModulationFactors.from_z(Tensor(np.zeros((1, 1, 1, 3))))


def test_modulate_formula(feature):
    rng = np.random.default_rng(2)
    gamma = Tensor(rng.uniform(-1, 1, size=feature.shape))
    beta = Tensor(rng.uniform(-1, 1, size=feature.shape))
    x_hat = standardize(feature).data
    out = modulate(feature, ModulationFactors(gamma, beta)).data
    np.testing.assert_allclose(out, x_hat * (1.0 + gamma.data) + beta.data)


@pytest.mark.parametrize("strategy_id", ["modulate", "add", "concat", "no_scale", "no_shift"])
def test_zero_factors_leave_standardized_feature(feature, strategy_id):
    module = get_modulation(strategy_id, feature.shape[-1], np.random.default_rng(0))
    out = module(feature, ModulationFactors.zeros(feature.shape)).data
    np.testing.assert_allclose(out, standardize(feature).data, atol=1e-12)


def test_hadamard_with_zero_scale_is_zero(feature):
    out = HadamardStrategy()(feature, ModulationFactors.zeros(feature.shape)).data
    np.testing.assert_array_equal(out, 0.0)


def test_strategy_registry_types():
    rng = np.random.default_rng(0)
    expected = {
        "modulate": ModulateStrategy,
        "add": AddStrategy,
        "concat": ConcatStrategy,
        "hadamard": HadamardStrategy,
        "no_scale": NoScaleStrategy,
        "no_shift": NoShiftStrategy,
    }
    assert set(expected) == set(Config.get_modulation_strategies())
    for strategy_id, cls in expected.items():
        assert isinstance(get_modulation(strategy_id, 4, rng), cls)


def test_unknown_strategy():
    with pytest.raises(ConfigurationError, match="Unknown modulation strategy"):
        get_modulation("film", 4, np.random.default_rng(0))


def test_only_concat_has_parameters():
    rng = np.random.default_rng(0)
    assert get_modulation("modulate", 4, rng).num_parameters() == 0
    assert get_modulation("concat", 4, rng).num_parameters() == 8 * 4 + 4
