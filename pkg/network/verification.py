"""
Full-model gradient check on a small configuration.
"""

import logging
from typing import Optional

import numpy as np

from config import ModelConfig
from engine import GradcheckReport, Tensor, gradcheck
from network.model import MmnModel

logger = logging.getLogger(__name__)


def toy_config(**overrides) -> ModelConfig:
    """T=8, V=5, C=8, N=1, L=2, K=3 with dropout off."""
    cfg = ModelConfig(num_frames=8, num_joints=5, in_channels=2, channels=8, blocks_per_stage=1,
                      num_stages=2, num_classes=3, dropout=0.0)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg.validate()


def model_gradcheck(
    cfg: Optional[ModelConfig] = None,
    batch: int = 2,
    seed: int = 0,
    eps: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradcheckReport:
    """
    Compare analytic and numeric gradients of the training loss w.r.t. every parameter.

    The model runs in training mode (batch statistics in batch norm). Inputs
    and labels come from `seed`.
    """
    cfg = cfg or toy_config()
    model = MmnModel(cfg).train()
    rng = np.random.default_rng(seed)
    frames = rng.normal(size=(batch, cfg.num_frames, cfg.num_joints, cfg.in_channels))
    labels = rng.integers(0, cfg.num_classes, size=batch)
    named = list(model.named_parameters())
    params = [p for _, p in named]

    def loss_fn(*_: Tensor) -> Tensor:
        return model.loss(Tensor(frames), labels)[0]

    report = gradcheck(loss_fn, params, eps=eps, tolerance=tolerance, names=[name for name, _ in named])
    logger.info(f"Model gradcheck over {model.num_parameters()} parameters: "
                f"max rel err {report.max_rel_error:.3e}")
    return report
