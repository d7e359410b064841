"""
Parameterized layers built on the engine's primitive ops.
"""

from typing import Tuple

import numpy as np

from engine import BatchNormState, Tensor
from engine import functional as F
from network.base import Module


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)


class Linear(Module):
    """Channel-wise affine map [..., in] -> [..., out]."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True, init: str = "glorot"):
        super().__init__()
        if init == "zeros":
            weight = np.zeros((in_features, out_features))
        elif init == "identity":
            weight = np.eye(in_features, out_features)
        else:
            weight = glorot(rng, in_features, out_features, (in_features, out_features))
        self.parameter("W", weight)
        self.b = Tensor(np.zeros(out_features), requires_grad=True) if bias else None
        self.in_features = in_features
        self.out_features = out_features

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.W, self.b)

    def macs(self, positions: int) -> int:
        return positions * self.in_features * self.out_features


class LayerNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.parameter("gain", np.ones(channels))
        self.parameter("bias", np.zeros(channels))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gain, self.bias, self.eps)


class BatchNorm(Module):
    """Batch norm over every axis but channels, no affine."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.stats = BatchNormState(channels)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(x, self.stats, self.training, self.momentum, self.eps)


class GraphConv(Module):
    """GELU((A x) W) with a learnable adjacency A [V, V]."""

    def __init__(self, num_joints: int, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.parameter("A", np.eye(num_joints))
        self.parameter("W", glorot(rng, in_channels, out_channels, (in_channels, out_channels)))
        self.num_joints = num_joints

    def forward(self, x: Tensor) -> Tensor:
        return F.gelu(F.linear(F.joint_mix(self.A, x), self.W))

    def macs(self, frames: int) -> int:
        c_in, c_out = self.W.shape
        return frames * self.num_joints * (self.num_joints * c_in + c_in * c_out)


class TemporalConv(Module):
    """Convolution along time with an odd kernel, shared across joints."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: np.random.Generator):
        super().__init__()
        self.parameter("W", glorot(rng, kernel * in_channels, out_channels, (kernel, in_channels, out_channels)))
        self.parameter("b", np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv_temporal(x, self.W, self.b)

    def macs(self, positions: int) -> int:
        k, c_in, c_out = self.W.shape
        return positions * k * c_in * c_out


class Conv2d(Module):
    """Convolution over (time, joint); no bias, a batch norm always follows."""

    def __init__(self, in_channels: int, out_channels: int, kernel: Tuple[int, int], rng: np.random.Generator):
        super().__init__()
        kt, kv = kernel
        fan = kt * kv * in_channels
        self.parameter("W", glorot(rng, fan, out_channels, (kt, kv, in_channels, out_channels)))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv_2d(x, self.W)

    def macs(self, positions: int) -> int:
        kt, kv, c_in, c_out = self.W.shape
        return positions * kt * kv * c_in * c_out


class Dropout(Module):
    def __init__(self, p: float):
        super().__init__()
        self.p = p

    def forward(self, x: Tensor) -> Tensor:
        return F.dropout(x, self.p, self.rng, self.training)


class FeedForward(Module):
    """Linear -> GELU -> Linear -> Dropout."""

    def __init__(self, channels: int, expansion: int, dropout: float, rng: np.random.Generator):
        super().__init__()
        self.fc1 = Linear(channels, channels * expansion, rng)
        self.fc2 = Linear(channels * expansion, channels, rng)
        self.drop = Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        return self.drop(self.fc2(F.gelu(self.fc1(x))))

    def macs(self, positions: int) -> int:
        return self.fc1.macs(positions) + self.fc2.macs(positions)
