"""Training package: schedule, AdamW, checkpoints and the training loop."""

from .schedule import epoch_position, lr_at
from .optimizer import AdamState, AdamW, adamw_step, clip_grad_norm
from .checkpoint import CheckpointManager, LoadedCheckpoint, TrainState, load_model
from .trainer import Trainer, check_compatibility, loss_trace, train

__all__ = [
    'lr_at',
    'epoch_position',
    'AdamState',
    'AdamW',
    'adamw_step',
    'clip_grad_norm',
    'CheckpointManager',
    'LoadedCheckpoint',
    'TrainState',
    'load_model',
    'Trainer',
    'check_compatibility',
    'loss_trace',
    'train',
]
