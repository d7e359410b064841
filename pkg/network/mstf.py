"""
Motion-guided skeletal-temporal former block.

The block splits its projected input into three channel slices: a skeletal
slice [0, C/4) processed by a graph convolution, a motion slice [C/4, 3C/4)
turned into frame differences, and a temporal slice [3C/4, C) processed by
a temporal convolution. Two motion modules read the differences and emit
scale/shift factors that modulate the skeletal and temporal features. The
three results are fused by a gated aggregation, projected back to C and
added residually, followed by a pre-norm feed-forward residual.
"""

from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from engine import Tensor
from engine import functional as F
from errors import ConfigurationError, DimensionError
from network.base import Module
from network.layers import BatchNorm, Conv2d, FeedForward, GraphConv, LayerNorm, Linear, TemporalConv
from network.modulation import ModulationFactors, get_modulation, standardize


def motion_branch(x: Tensor) -> Tensor:
    """Frame differences along time, zero-padded with one leading frame to keep T frames."""
    return F.pad_leading(F.temporal_diff(x), 1)


class Msm(Module):
    """Skeletal motion module: tanh(BN(GConv(dX))) split into (gamma, beta)."""

    def __init__(self, num_joints: int, channels: int, rng: np.random.Generator,
                 momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.gconv = GraphConv(num_joints, channels, channels, rng)
        self.bn = BatchNorm(channels, momentum, eps)

    def forward(self, motion: Tensor) -> ModulationFactors:
        return ModulationFactors.from_z(F.tanh(self.bn(self.gconv(motion))))

    def macs(self, frames: int) -> int:
        return self.gconv.macs(frames)


class Mtm(Module):
    """Temporal motion module: tanh(BN(Conv2d(dX))) split into (gamma, beta)."""

    def __init__(self, channels: int, kernel: Tuple[int, int], rng: np.random.Generator,
                 momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.conv = Conv2d(channels, channels, kernel, rng)
        self.bn = BatchNorm(channels, momentum, eps)

    def forward(self, motion: Tensor) -> ModulationFactors:
        return ModulationFactors.from_z(F.tanh(self.bn(self.conv(motion))))

    def macs(self, positions: int) -> int:
        return self.conv.macs(positions)


class GatedAggregation(Module):
    """
    Adaptive gated fusion of branches that share their T x V extent.

    Each branch is summarized by global mean pooling; an affine map of the
    concatenated summaries gives one sigmoid gate per branch, and the output
    is the channel concatenation of the gated branches. The affine map starts
    at zero, so every gate starts at 0.5.
    """

    def __init__(self, branch_channels: Sequence[int], rng: np.random.Generator):
        super().__init__()
        if len(branch_channels) < 2:
            raise ConfigurationError(f"gated aggregation needs at least 2 branches, got {len(branch_channels)}")
        self.branch_channels = list(branch_channels)
        self.gate = Linear(sum(self.branch_channels), len(self.branch_channels), rng, init="zeros")

    def forward(self, branches: Sequence[Tensor]) -> Tuple[Tensor, Tensor]:
        """
        Fuse the branches.

        Args:
            branches: Tensors [..., T, V, C_b], one per configured branch

        Returns:
            The fused tensor [..., T, V, sum C_b] and the gates [..., B]

        Raises:
            DimensionError: If the branches disagree on T x V or channel counts
        """
        if len(branches) != len(self.branch_channels):
            raise DimensionError(f"expected {len(self.branch_channels)} branches, got {len(branches)}")
        ref = branches[0].shape[:-1]
        for branch, channels in zip(branches, self.branch_channels):
            if branch.shape[:-1] != ref:
                raise DimensionError(f"branch shape {branch.shape} does not match {ref} outside channels")
            if branch.shape[-1] != channels:
                raise DimensionError(f"branch has {branch.shape[-1]} channels, expected {channels}")
        descriptor = F.concat([F.global_mean_pool(b) for b in branches])
        gates = F.sigmoid(self.gate(descriptor))
        lead = gates.shape[:-1]
        gated = []
        for i, branch in enumerate(branches):
            g = F.reshape(F.slice_axis(gates, i, i + 1), lead + (1, 1, 1))
            gated.append(F.mul(branch, g))
        return F.concat(gated), gates

    def macs(self, positions: int) -> int:
        return self.gate.macs(1)


class MstfBlock(Module):
    """One motion-guided skeletal-temporal former block, shape-preserving."""

    def __init__(self, cfg, rng: np.random.Generator):
        super().__init__()
        channels = cfg.channels
        if channels % 4:
            raise ConfigurationError(f"channels must be divisible by 4, got {channels}")
        quarter = channels // 4
        self.channels = channels
        self.split = [quarter, 2 * quarter, quarter]
        self.modulation_eps = cfg.modulation_eps
        self.shared_branch_input = cfg.shared_branch_input

        self.norm1 = LayerNorm(channels, cfg.ln_eps)
        self.in_proj = Linear(channels, channels, rng)
        self.gconv = GraphConv(cfg.num_joints, quarter, quarter, rng)
        self.tconv = TemporalConv(quarter, quarter, cfg.tconv_kernel, rng)
        self.msm: Optional[Msm] = None
        self.mtm: Optional[Mtm] = None
        self.skeletal_mod = None
        self.temporal_mod = None
        if cfg.msm_enabled:
            self.msm = Msm(cfg.num_joints, 2 * quarter, rng, cfg.bn_momentum, cfg.bn_eps)
            self.skeletal_mod = get_modulation(cfg.modulation_strategy, quarter, rng, cfg.modulation_eps)
        if cfg.mtm_enabled:
            self.mtm = Mtm(2 * quarter, tuple(cfg.mtm_kernel), rng, cfg.bn_momentum, cfg.bn_eps)
            self.temporal_mod = get_modulation(cfg.modulation_strategy, quarter, rng, cfg.modulation_eps)
        self.aggregate = GatedAggregation(self.split, rng)
        self.out_proj = Linear(channels, channels, rng)
        self.norm2 = LayerNorm(channels, cfg.ln_eps)
        self.ffn = FeedForward(channels, cfg.ffn_expansion, cfg.dropout, rng)

        self.last_aggregate: Optional[np.ndarray] = None
        self.last_factors: Dict[str, Optional[ModulationFactors]] = {}
        self.last_gates: Optional[np.ndarray] = None

    def _branch(self, feature: Tensor, module: Optional[Module], modulator, motion: Tensor,
                stats_source: Optional[Tensor]) -> Tuple[Tensor, Optional[ModulationFactors]]:
        if module is None:
            return standardize(feature, self.modulation_eps, stats_source), None
        factors = module(motion)
        return modulator(feature, factors, stats_source), factors

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.channels:
            raise DimensionError(f"block expects {self.channels} channels, got input {x.shape}")
        h = self.in_proj(self.norm1(x))
        x_s, x_m, x_t = F.split_channels(h, self.split)
        x_gc = self.gconv(x_s)
        x_tc = self.tconv(x_t)
        motion = motion_branch(x_m)

        if self.shared_branch_input:
            shared = F.add(x_gc, x_tc)
            skeletal_in, temporal_in, stats = shared, shared, x_tc
        else:
            skeletal_in, temporal_in, stats = x_gc, x_tc, None
        x_gcm, skeletal_factors = self._branch(skeletal_in, self.msm, self.skeletal_mod, motion, stats)
        x_tcm, temporal_factors = self._branch(temporal_in, self.mtm, self.temporal_mod, motion, stats)

        aggregated, gates = self.aggregate([x_gcm, motion, x_tcm])
        self.last_aggregate = aggregated.data
        self.last_gates = gates.data
        self.last_factors = {"msm": _detached(skeletal_factors), "mtm": _detached(temporal_factors)}

        x = F.add(x, self.out_proj(aggregated))
        return F.add(x, self.ffn(self.norm2(x)))

    def macs(self, frames: int, num_joints: int) -> Dict[str, int]:
        """Multiply-accumulates per layer for one sample at `frames` x `num_joints`."""
        positions = frames * num_joints
        counts = {
            "in_proj": self.in_proj.macs(positions),
            "gconv": self.gconv.macs(frames),
            "tconv": self.tconv.macs(positions),
            "aggregate": self.aggregate.macs(positions),
            "out_proj": self.out_proj.macs(positions),
            "ffn": self.ffn.macs(positions),
        }
        if self.msm is not None:
            counts["msm"] = self.msm.macs(frames) + self.skeletal_mod.macs(positions)
        if self.mtm is not None:
            counts["mtm"] = self.mtm.macs(positions) + self.temporal_mod.macs(positions)
        return counts


def _detached(factors: Optional[ModulationFactors]) -> Optional[ModulationFactors]:
    if factors is None:
        return None
    return ModulationFactors(factors.gamma.detach(), factors.beta.detach())
