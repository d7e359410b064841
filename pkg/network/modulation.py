"""
Motion-guided feature modulation.

A branch feature is standardized per channel over (time, joints) and then
recombined with the scale/shift factors produced by a motion module. The
default recombination is ((x - mu) / sigma) * (1 + gamma) + beta; the other
strategies are ablation variants and are looked up with `get_modulation`.
"""

import abc
from dataclasses import dataclass
from typing import Optional

import numpy as np

from engine import Tensor
from engine import functional as F
from errors import ConfigurationError, DimensionError
from network.base import Module
from network.layers import Linear

DEFAULT_EPS = 1e-5


def standardize(x: Tensor, eps: float = DEFAULT_EPS, stats_source: Optional[Tensor] = None) -> Tensor:
    """
    Per-channel standardization over the (T, V) axes of each sample.

    Args:
        x: Branch feature [..., T, V, C]
        eps: Guard on sigma, applied as sqrt(var + eps^2)
        stats_source: Tensor whose statistics are used instead of x's own

    Returns:
        (x - mu) / sigma
    """
    source = x if stats_source is None else stats_source
    if source.shape[-1] != x.shape[-1]:
        raise DimensionError(f"statistics source {source.shape} does not match feature {x.shape}")
    axes = (source.ndim + F.TIME_AXIS, source.ndim + F.JOINT_AXIS)
    mu = F.mean(source, axis=axes, keepdims=True)
    sigma = F.std(source, axis=axes, keepdims=True, eps=eps * eps)
    return F.div(F.sub(x, mu), sigma)


@dataclass
class ModulationFactors:
    """Scale (gamma) and shift (beta) fields, each [..., T, V, C/4]."""

    gamma: Tensor
    beta: Tensor

    @classmethod
    def from_z(cls, z: Tensor) -> "ModulationFactors":
        """Split a motion-module output Z [..., C/2] into its two channel halves."""
        if z.shape[-1] % 2:
            raise DimensionError(f"modulation output needs an even channel count, got {z.shape}")
        gamma, beta = F.split_channels(z, [z.shape[-1] // 2] * 2)
        return cls(gamma, beta)

    @classmethod
    def zeros(cls, shape) -> "ModulationFactors":
        return cls(Tensor(np.zeros(shape)), Tensor(np.zeros(shape)))

    def max_abs(self) -> float:
        return float(max(np.abs(self.gamma.data).max(), np.abs(self.beta.data).max()))


def modulate(x: Tensor, factors: ModulationFactors, eps: float = DEFAULT_EPS,
             stats_source: Optional[Tensor] = None) -> Tensor:
    """((x - mu) / sigma) * (1 + gamma) + beta."""
    x_hat = standardize(x, eps, stats_source)
    return F.add(F.mul(x_hat, F.add(factors.gamma, 1.0)), factors.beta)


class BaseModulation(Module):
    """Base class for the ways a branch feature absorbs its modulation factors."""

    def __init__(self, eps: float = DEFAULT_EPS):
        super().__init__()
        self.eps = eps

    def forward(self, x: Tensor, factors: ModulationFactors, stats_source: Optional[Tensor] = None) -> Tensor:
        return self.combine(standardize(x, self.eps, stats_source), factors)

    @abc.abstractmethod
    def combine(self, x_hat: Tensor, factors: ModulationFactors) -> Tensor:
        """
        Merge a standardized feature with the factors.

        Args:
            x_hat: Standardized branch feature
            factors: Scale and shift fields of the same shape

        Returns:
            The modulated feature, same shape as x_hat
        """
        pass

    def macs(self, positions: int) -> int:
        return 0


class ModulateStrategy(BaseModulation):
    def combine(self, x_hat: Tensor, factors: ModulationFactors) -> Tensor:
        return F.add(F.mul(x_hat, F.add(factors.gamma, 1.0)), factors.beta)


class AddStrategy(BaseModulation):
    def combine(self, x_hat: Tensor, factors: ModulationFactors) -> Tensor:
        return F.add(F.add(x_hat, factors.gamma), factors.beta)


class HadamardStrategy(BaseModulation):
    """x_hat * gamma; the shift field is discarded."""

    def combine(self, x_hat: Tensor, factors: ModulationFactors) -> Tensor:
        return F.mul(x_hat, factors.gamma)


class NoScaleStrategy(BaseModulation):
    def combine(self, x_hat: Tensor, factors: ModulationFactors) -> Tensor:
        return F.add(x_hat, factors.beta)


class NoShiftStrategy(BaseModulation):
    def combine(self, x_hat: Tensor, factors: ModulationFactors) -> Tensor:
        return F.mul(x_hat, F.add(factors.gamma, 1.0))


class ConcatStrategy(BaseModulation):
    """[x_hat | gamma] mapped back to the branch width, identity on the x_hat lanes."""

    def __init__(self, channels: int, rng: np.random.Generator, eps: float = DEFAULT_EPS):
        super().__init__(eps)
        self.recombine = Linear(2 * channels, channels, rng, init="identity")

    def combine(self, x_hat: Tensor, factors: ModulationFactors) -> Tensor:
        return self.recombine(F.concat([x_hat, factors.gamma]))

    def macs(self, positions: int) -> int:
        return self.recombine.macs(positions)


def get_modulation(strategy_id: str, channels: int, rng: np.random.Generator,
                   eps: float = DEFAULT_EPS) -> BaseModulation:
    """
    Get a modulation strategy by ID.

    Args:
        strategy_id: One of Config.get_modulation_strategies()
        channels: Branch channel count (C/4)
        rng: Initializer for strategies with parameters
        eps: Sigma guard of the standardization

    Returns:
        A modulation module

    Raises:
        ConfigurationError: If the strategy ID is not recognized
    """
    from config import Config

    if strategy_id == Config.MODULATION_MODULATE:
        return ModulateStrategy(eps)
    elif strategy_id == Config.MODULATION_ADD:
        return AddStrategy(eps)
    elif strategy_id == Config.MODULATION_CONCAT:
        return ConcatStrategy(channels, rng, eps)
    elif strategy_id == Config.MODULATION_HADAMARD:
        return HadamardStrategy(eps)
    elif strategy_id == Config.MODULATION_NO_SCALE:
        return NoScaleStrategy(eps)
    elif strategy_id == Config.MODULATION_NO_SHIFT:
        return NoShiftStrategy(eps)
    else:
        raise ConfigurationError(f"Unknown modulation strategy: {strategy_id}")
