"""
The full network: feature embedding, a pyramid of MSTF stages with
cross-scale gated fusion, and the classifier head.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import ModelConfig
from engine import Tensor, no_grad
from engine import functional as F
from errors import ConfigurationError, DimensionError
from network.base import Module, ModuleList
from network.embedding import FeatureEmbedding
from network.layers import LayerNorm, Linear
from network.mstf import GatedAggregation, MstfBlock

logger = logging.getLogger(__name__)

FramesLike = Union[Tensor, np.ndarray]


def temporal_mean_pool(x: Tensor, frames: int) -> Tensor:
    """Average consecutive groups of frames so the time axis has `frames` entries."""
    length = x.shape[F.TIME_AXIS]
    if length == frames:
        return x
    if length % frames:
        raise DimensionError(f"cannot pool {length} frames down to {frames}")
    shape = x.shape[:-3] + (frames, length // frames) + x.shape[-2:]
    return F.mean(F.reshape(x, shape), axis=-3)


class Stage(Module):
    """N MSTF blocks run in sequence at one temporal resolution."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.block = ModuleList([MstfBlock(cfg, rng) for _ in range(cfg.blocks_per_stage)])

    def forward(self, x: Tensor) -> Tensor:
        return self.block(x)


class MmnModel(Module):
    """Motion-guided modulation network mapping [B, T, V, C_in] frames to [B, K] logits."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.config = cfg
        rng = np.random.default_rng(cfg.init_seed)
        self.embed = FeatureEmbedding(cfg.num_frames, cfg.num_joints, cfg.in_channels, cfg.channels, rng)
        self.stage = ModuleList([Stage(cfg, rng) for _ in range(cfg.num_stages)])
        self.fusion: Optional[GatedAggregation] = None
        self.fuse: Optional[Linear] = None
        if cfg.num_stages > 1:
            self.fusion = GatedAggregation([cfg.channels] * cfg.num_stages, rng)
            self.fuse = Linear(cfg.num_stages * cfg.channels, cfg.channels, rng)
        self.head_norm = LayerNorm(cfg.channels, cfg.ln_eps)
        self.head = Linear(cfg.channels, cfg.num_classes, rng)
        self.last_fusion_gates: Optional[np.ndarray] = None
        logger.info(f"Built model with {self.num_parameters()} parameters "
                    f"({cfg.num_stages} stages x {cfg.blocks_per_stage} blocks, C={cfg.channels})")

    def _check_frames(self, x: Tensor) -> None:
        cfg = self.config
        if x.ndim < 3 or x.shape[-2] != cfg.num_joints:
            raise DimensionError(f"expected frames [..., T, {cfg.num_joints}, C], got {x.shape}")

    def mcl_forward(self, x_feat: Tensor) -> Tensor:
        """
        Run the stage pyramid and fuse the per-stage outputs.

        Args:
            x_feat: Embedded features [..., T, V, C]

        Returns:
            Fused features [..., T', V, C] with T' = T / 2^(L-1)

        Raises:
            ConfigurationError: If T is not divisible by 2^(L-1)
        """
        levels = len(self.stage)
        length = x_feat.shape[F.TIME_AXIS]
        factor = 2 ** (levels - 1)
        if length % factor:
            raise ConfigurationError(f"{length} frames cannot feed {levels} stages (need a multiple of {factor})")
        reduced = length // factor

        outputs: List[Tensor] = []
        h = x_feat
        for index, stage in enumerate(self.stage):
            if index > 0:
                h = F.temporal_downsample_by_2(h)
            h = stage(h)
            outputs.append(h)
        if self.fusion is None:
            return outputs[0]
        pooled = [temporal_mean_pool(out, reduced) for out in outputs]
        fused, gates = self.fusion(pooled)
        self.last_fusion_gates = gates.data
        return self.fuse(fused)

    def forward(self, frames: FramesLike) -> Tensor:
        x = frames if isinstance(frames, Tensor) else Tensor(frames)
        self._check_frames(x)
        z = self.mcl_forward(self.embed(x))
        return self.head(F.global_mean_pool(self.head_norm(z)))

    def predict(self, frames: FramesLike) -> np.ndarray:
        """Eval-mode logits without recording a graph. Leaves the training flag unchanged."""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                return self.forward(frames).data
        finally:
            self.train(was_training)

    def loss(self, frames: FramesLike, labels: Sequence[int]) -> Tuple[Tensor, Tensor]:
        """Mean cross-entropy of a batch; returns (loss, logits)."""
        logits = self.forward(frames)
        return F.cross_entropy(logits, labels), logits

    def blocks(self) -> List[List[MstfBlock]]:
        return [list(stage.block) for stage in self.stage]

    def export_feature_maps(self, frames: FramesLike, stage: int, block: int) -> np.ndarray:
        return export_feature_maps(frames, self, stage, block)

    def export_all_feature_maps(self, frames: FramesLike) -> Dict[Tuple[int, int], np.ndarray]:
        """Channel-max aggregation maps of every block from a single eval forward."""
        self.predict(frames)
        maps = {}
        for s, blocks in enumerate(self.blocks()):
            for b, blk in enumerate(blocks):
                maps[(s, b)] = blk.last_aggregate.max(axis=-1)
        return maps


def export_feature_maps(frames: FramesLike, model: MmnModel, stage: int, block: int) -> np.ndarray:
    """
    Channel-max of a block's aggregated features after an eval forward.

    Args:
        frames: One sample [T, V, C_in] or a batch [B, T, V, C_in]
        model: The network
        stage: 0-based stage index
        block: 0-based block index within the stage

    Returns:
        Map [T_stage, V] (or [B, T_stage, V] for a batch)

    Raises:
        ConfigurationError: If an index is out of range
    """
    blocks = model.blocks()
    if not 0 <= stage < len(blocks):
        raise ConfigurationError(f"stage index {stage} out of range [0, {len(blocks)})")
    if not 0 <= block < len(blocks[stage]):
        raise ConfigurationError(f"block index {block} out of range [0, {len(blocks[stage])})")
    model.predict(frames)
    return blocks[stage][block].last_aggregate.max(axis=-1)
