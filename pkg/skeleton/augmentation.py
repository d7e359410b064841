"""
Skeleton-temporal context-aware augmentation.

The skeletal half applies one random 2-D affine map (rotation, isotropic
scale, translation) to every joint; the temporal half re-indexes each frame
by a small random integer offset, clamped to the sequence.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from errors import ConfigurationError, UnsupportedGeometryError


@dataclass
class AugmentationParams:
    """Draw ranges and switches of the augmentation pipeline."""

    rotation_range_deg: float = 15.0
    scale_range: Tuple[float, float] = (0.9, 1.1)
    translation_range: float = 0.1
    temporal_jitter_range: int = 3
    skeletal_enabled: bool = True
    temporal_enabled: bool = True
    affine_per_frame: bool = False
    rng_seed: int = 0

    def validate(self) -> "AugmentationParams":
        if self.rotation_range_deg < 0 or self.translation_range < 0 or self.temporal_jitter_range < 0:
            raise ConfigurationError("augmentation ranges must be non-negative")
        low, high = self.scale_range
        if not 0 < low <= high:
            raise ConfigurationError(f"scale_range must satisfy 0 < low <= high, got {self.scale_range}")
        return self


def rotation_matrix(theta_deg: float) -> np.ndarray:
    theta = np.deg2rad(theta_deg)
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def apply_affine(frames: np.ndarray, theta_deg, scale, offset) -> np.ndarray:
    """
    Compute S * (X R_theta^T) + offset.

    Args:
        frames: [T, V, 2] coordinates
        theta_deg: Rotation angle, scalar or one per frame
        scale: Scale factor, scalar or one per frame
        offset: Translation [2] or one per frame [T, 2]

    Returns:
        Transformed frames [T, V, 2]
    """
    if frames.shape[-1] != 2:
        raise UnsupportedGeometryError(f"affine augmentation needs 2-D joints, got C_in={frames.shape[-1]}")
    theta = np.broadcast_to(np.asarray(theta_deg, dtype=np.float64), (frames.shape[0],))
    scales = np.broadcast_to(np.asarray(scale, dtype=np.float64), (frames.shape[0],))
    offsets = np.broadcast_to(np.asarray(offset, dtype=np.float64), (frames.shape[0], 2))
    rotations = np.stack([rotation_matrix(t) for t in theta])
    rotated = np.einsum("tvj,tij->tvi", frames, rotations)
    return scales[:, None, None] * rotated + offsets[:, None, :]


def draw_affine(params: AugmentationParams, rng: np.random.Generator, num_frames: int):
    """Draw (theta, scale, offset), once per sequence or once per frame."""
    count = num_frames if params.affine_per_frame else 1
    theta = rng.uniform(-params.rotation_range_deg, params.rotation_range_deg, size=count)
    scale = rng.uniform(params.scale_range[0], params.scale_range[1], size=count)
    offset = rng.uniform(-params.translation_range, params.translation_range, size=(count, 2))
    if not params.affine_per_frame:
        return float(theta[0]), float(scale[0]), offset[0]
    return theta, scale, offset


def augment_skeletal(frames: np.ndarray, params: AugmentationParams, rng: np.random.Generator) -> np.ndarray:
    """
    Random rotation, scaling and translation broadcast to all joints.

    Raises:
        UnsupportedGeometryError: If the joints are not 2-D
    """
    if frames.shape[-1] != 2:
        raise UnsupportedGeometryError(f"affine augmentation needs 2-D joints, got C_in={frames.shape[-1]}")
    theta, scale, offset = draw_affine(params, rng, frames.shape[0])
    return apply_affine(frames, theta, scale, offset)


def apply_jitter(frames: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Output frame t is input frame clamp(t + deltas[t], 0, T - 1)."""
    length = frames.shape[0]
    indices = np.clip(np.arange(length) + np.asarray(deltas, dtype=np.int64), 0, length - 1)
    return frames[indices]


def augment_temporal(frames: np.ndarray, params: AugmentationParams, rng: np.random.Generator) -> np.ndarray:
    """Jitter each frame index by an integer drawn uniformly from [-r, r]."""
    r = params.temporal_jitter_range
    deltas = rng.integers(-r, r + 1, size=frames.shape[0])
    return apply_jitter(frames, deltas)


def stca(frames: np.ndarray, params: AugmentationParams, rng: np.random.Generator) -> np.ndarray:
    """Skeletal then temporal augmentation, each behind its switch."""
    out = frames
    if params.skeletal_enabled:
        out = augment_skeletal(out, params, rng)
    if params.temporal_enabled:
        out = augment_temporal(out, params, rng)
    return out
