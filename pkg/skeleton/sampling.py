"""Uniform temporal sampling to a fixed length."""

import numpy as np

from skeleton.sequence import SkeletonSequence


def sample_indices(raw_len: int, num_frames: int) -> np.ndarray:
    """Frame i of the output is raw frame floor((i + 0.5) * raw_len / T), clamped."""
    indices = np.floor((np.arange(num_frames) + 0.5) * raw_len / num_frames).astype(np.int64)
    return np.clip(indices, 0, raw_len - 1)


def uniform_sample(seq: SkeletonSequence, num_frames: int = 64) -> np.ndarray:
    """
    Resample a sequence to `num_frames` frames by index selection.

    Args:
        seq: Sequence with raw_len >= 1
        num_frames: Target length T

    Returns:
        Array [T, V, C_in]
    """
    return seq.frames[sample_indices(seq.raw_len, num_frames)].copy()
