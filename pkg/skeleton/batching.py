"""
Batch assembly: sampling, optional augmentation and modality conversion.

Every sample draws its augmentation from its own generator, derived from
(seed, sample id, epoch), so the batch content does not depend on which
worker thread prepared it or in which order.
"""

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from skeleton.augmentation import AugmentationParams, stca
from skeleton.bones import to_bone
from skeleton.sampling import uniform_sample
from skeleton.sequence import SkeletonSequence


def sample_rng(seed: int, sample_id: str, epoch: int) -> np.random.Generator:
    """Generator keyed by (seed, sample id, epoch)."""
    return np.random.default_rng([seed, zlib.crc32(sample_id.encode("utf-8")), epoch])


def prepare_sample(
    seq: SkeletonSequence,
    num_frames: int,
    augment: Optional[AugmentationParams] = None,
    seed: int = 0,
    epoch: int = 0,
    parents: Optional[Sequence[int]] = None,
    bone: bool = False,
) -> np.ndarray:
    """
    Turn one raw sequence into a network input [T, V, C_in].

    Args:
        seq: Raw sequence
        num_frames: Target length T
        augment: Augmentation parameters; None for evaluation
        seed: Base seed of the augmentation stream
        epoch: Epoch index mixed into the stream
        parents: Joint-parent map for the bone modality
        bone: Convert joints to bones after augmentation

    Returns:
        The prepared frames
    """
    frames = uniform_sample(seq, num_frames)
    if augment is not None:
        frames = stca(frames, augment, sample_rng(seed + augment.rng_seed, seq.sample_id, epoch))
    if bone:
        frames = to_bone(frames, parents)
    return frames


def assemble_batch(
    sequences: Sequence[SkeletonSequence],
    num_frames: int,
    augment: Optional[AugmentationParams] = None,
    seed: int = 0,
    epoch: int = 0,
    parents: Optional[Sequence[int]] = None,
    bone: bool = False,
    executor: Optional[ThreadPoolExecutor] = None,
) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """
    Prepare a batch of samples, optionally on a thread pool.

    Returns:
        (frames [B, T, V, C_in], labels [B], sample ids)
    """
    def prepare(seq: SkeletonSequence) -> np.ndarray:
        return prepare_sample(seq, num_frames, augment, seed, epoch, parents, bone)

    if executor is None:
        frames = [prepare(seq) for seq in sequences]
    else:
        frames = list(executor.map(prepare, sequences))
    labels = np.array([seq.label for seq in sequences], dtype=np.int64)
    return np.stack(frames), labels, [seq.sample_id for seq in sequences]


def iterate_batches(
    sequences: Sequence[SkeletonSequence],
    batch_size: int,
    num_frames: int,
    parents: Optional[Sequence[int]] = None,
    bone: bool = False,
    executor: Optional[ThreadPoolExecutor] = None,
):
    """Yield un-augmented batches in dataset order, for evaluation."""
    for start in range(0, len(sequences), batch_size):
        yield assemble_batch(sequences[start:start + batch_size], num_frames, None, 0, 0, parents, bone, executor)
