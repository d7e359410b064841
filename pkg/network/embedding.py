"""
Feature embedding: a three-layer projection of joint coordinates plus the
Skate positional embedding F_ste[t, v, c] = F_te[t, c] * F_se[v, c].
"""

import numpy as np

from engine import Tensor
from engine import functional as F
from network.base import Module, ModuleList
from network.layers import Linear


def normalized_indices(num_frames: int) -> np.ndarray:
    """Frame indices mapped linearly onto [-1, 1] (all zero for one frame)."""
    if num_frames == 1:
        return np.zeros(1)
    return -1.0 + 2.0 * np.arange(num_frames) / (num_frames - 1)


def temporal_features(num_frames: int, channels: int) -> np.ndarray:
    """
    Fixed sinusoidal features F_te [T, C] of the normalized frame index.

    Channel 2k holds sin(n_t * w_k), channel 2k+1 holds cos(n_t * w_k), with
    w_k = 10000^(-2k/C).
    """
    n = normalized_indices(num_frames)[:, None]
    k = np.arange(channels) // 2
    omega = 10000.0 ** (-2.0 * k / channels)
    angles = n * omega[None, :]
    features = np.empty((num_frames, channels))
    features[:, 0::2] = np.sin(angles[:, 0::2])
    features[:, 1::2] = np.cos(angles[:, 1::2])
    return features


def skate_embedding(num_frames: int, f_se: Tensor) -> Tensor:
    """Outer product of F_te [T, C] and F_se [V, C] per channel -> [T, V, C]."""
    f_te = Tensor(temporal_features(num_frames, f_se.shape[-1]))
    return F.mul(F.reshape(f_te, (num_frames, 1, f_se.shape[-1])), f_se)


class FeatureEmbedding(Module):
    """X_feat = Proj(frames) + F_ste."""

    def __init__(self, num_frames: int, num_joints: int, in_channels: int, channels: int,
                 rng: np.random.Generator):
        super().__init__()
        self.proj = ModuleList([
            Linear(in_channels, channels, rng),
            Linear(channels, channels, rng),
            Linear(channels, channels, rng),
        ])
        self.parameter("F_se", rng.normal(0.0, 0.1, size=(num_joints, channels)))
        self.register_constant("F_te", temporal_features(num_frames, channels))

    def project(self, frames: Tensor) -> Tensor:
        h = frames
        for i, layer in enumerate(self.proj):
            h = layer(h)
            if i < len(self.proj) - 1:
                h = F.gelu(h)
        return h

    def forward(self, frames: Tensor) -> Tensor:
        num_frames = frames.shape[F.TIME_AXIS]
        if num_frames == self.F_te.shape[0]:
            f_te = Tensor(self.F_te)
            f_ste = F.mul(F.reshape(f_te, (num_frames, 1, self.F_te.shape[1])), self.F_se)
        else:
            f_ste = skate_embedding(num_frames, self.F_se)
        return F.add(self.project(frames), f_ste)

    def macs(self, positions: int) -> int:
        return sum(layer.macs(positions) for layer in self.proj)
