"""
Learning-rate schedule: linear warmup, then cosine annealing with restarts.
"""

import math

from config import TrainConfig


def lr_at(epoch: float, cfg: TrainConfig) -> float:
    """
    Learning rate at a (possibly fractional) epoch.

    During warmup the rate rises linearly from warmup_start_lr to base_lr.
    The remaining epochs are split into cosine_cycles equal cycles; each
    decays from base_lr to min_lr along a half cosine and restarts at
    base_lr. At and beyond the final epoch the rate is min_lr.

    Args:
        epoch: Epoch position, >= 0
        cfg: Training configuration

    Returns:
        The learning rate
    """
    epoch = max(0.0, float(epoch))
    if epoch < cfg.warmup_epochs:
        return cfg.warmup_start_lr + (cfg.base_lr - cfg.warmup_start_lr) * epoch / cfg.warmup_epochs
    span = cfg.epochs - cfg.warmup_epochs
    if span <= 0:
        return cfg.base_lr
    cycle_len = span / cfg.cosine_cycles
    position = (epoch - cfg.warmup_epochs) / cycle_len
    if position >= cfg.cosine_cycles:
        return cfg.min_lr
    fraction = position - math.floor(position)
    return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * fraction))


def epoch_position(epoch: int, step: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    """The schedule position of a step: the epoch itself, or interpolated when step_schedule is on."""
    if not cfg.step_schedule or steps_per_epoch <= 0:
        return float(epoch)
    return epoch + step / steps_per_epoch
