"""
Synthetic micro-action generator.

Each class oscillates one joint subset (its body group) around a shared
rest pose with a class-specific frequency, phase and direction. Classes in
the same body group differ only by frequency, and the similarity knob
shrinks those frequency gaps.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from errors import ConfigurationError
from skeleton.bones import default_parents
from skeleton.sequence import LabelTaxonomy, SkeletonSequence

logger = logging.getLogger(__name__)

BASE_FREQUENCY = 1.0
FREQUENCY_GAP = 1.0
PHASE_JITTER = 0.3


@dataclass
class SynthSpec:
    """Parameters of the synthetic generator."""

    num_classes: int = 4
    per_class: int = 100
    num_joints: int = 12
    raw_len: int = 64
    raw_len_jitter: int = 16
    amplitude: float = 0.3
    noise_sigma: float = 0.01
    similarity: float = 0.0
    seed: int = 7

    @property
    def num_bodies(self) -> int:
        return max(1, self.num_classes // 2)

    @property
    def separable(self) -> bool:
        return self.amplitude > 0

    def validate(self) -> "SynthSpec":
        if self.num_classes < 2:
            raise ConfigurationError("synthetic data needs at least 2 classes")
        if self.noise_sigma < 0:
            raise ConfigurationError(f"noise_sigma must be non-negative, got {self.noise_sigma}")
        if self.amplitude < 0:
            raise ConfigurationError(f"amplitude must be non-negative, got {self.amplitude}")
        if not 0.0 <= self.similarity <= 1.0:
            raise ConfigurationError(f"similarity must lie in [0, 1], got {self.similarity}")
        if self.num_joints < self.num_bodies:
            raise ConfigurationError(f"{self.num_joints} joints cannot host {self.num_bodies} body groups")
        if self.per_class < 1 or self.raw_len - self.raw_len_jitter < 1:
            raise ConfigurationError("per_class and the shortest raw length must be at least 1")
        return self


def body_groups(spec: SynthSpec) -> List[np.ndarray]:
    """Contiguous joint subsets, one per body group."""
    return np.array_split(np.arange(spec.num_joints), spec.num_bodies)


def synth_generate(spec: SynthSpec) -> Tuple[List[SkeletonSequence], LabelTaxonomy]:
    """
    Generate a labelled dataset, deterministic in `spec.seed`.

    Args:
        spec: Generator parameters

    Returns:
        Sequences ordered by class then index, and the taxonomy

    Raises:
        ConfigurationError: For invalid parameters such as negative noise
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    groups = body_groups(spec)
    rest = rng.uniform(-0.5, 0.5, size=(spec.num_joints, 2))
    joint_weight = rng.uniform(0.5, 1.0, size=spec.num_joints)

    classes = []
    for c in range(spec.num_classes):
        rank = c // spec.num_bodies
        angle = rng.uniform(0.0, np.pi)
        classes.append({
            "group": c % spec.num_bodies,
            "frequency": BASE_FREQUENCY + (1.0 - spec.similarity) * FREQUENCY_GAP * rank,
            "phase": rng.uniform(0.0, 2.0 * np.pi),
            "direction": np.array([np.cos(angle), np.sin(angle)]),
        })

    sequences: List[SkeletonSequence] = []
    for c, cls in enumerate(classes):
        joints = groups[cls["group"]]
        for i in range(spec.per_class):
            raw_len = spec.raw_len + int(rng.integers(-spec.raw_len_jitter, spec.raw_len_jitter + 1))
            t = np.arange(raw_len) / raw_len
            phase = cls["phase"] + rng.uniform(-PHASE_JITTER, PHASE_JITTER)
            wave = spec.amplitude * np.sin(2.0 * np.pi * cls["frequency"] * t + phase)
            frames = np.broadcast_to(rest, (raw_len, spec.num_joints, 2)).copy()
            frames[:, joints, :] += (wave[:, None, None] * joint_weight[joints][None, :, None]
                                     * cls["direction"][None, None, :])
            frames += rng.normal(0.0, spec.noise_sigma, size=frames.shape)
            sequences.append(SkeletonSequence(frames, c, f"synth-{c:03d}-{i:04d}"))

    taxonomy = LabelTaxonomy(
        action_names=[f"action_{c}" for c in range(spec.num_classes)],
        body_of_action=[cls["group"] for cls in classes],
        body_names=[f"body_{g}" for g in range(spec.num_bodies)],
        joint_parents=default_parents(spec.num_joints),
    ).validate()
    logger.info(f"Generated {len(sequences)} synthetic sequences ({spec.num_classes} classes, seed {spec.seed})")
    return sequences, taxonomy


def split_sequences(
    sequences: Sequence[SkeletonSequence],
    ratios: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> Dict[str, List[SkeletonSequence]]:
    """
    Stratified train/val/test split with disjoint sample ids.

    Args:
        sequences: Samples to split
        ratios: Train, validation and test fractions
        seed: Shuffle seed

    Returns:
        {"train": [...], "val": [...], "test": [...]}
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ConfigurationError(f"split ratios must be three non-negative numbers, got {list(ratios)}")
    total = float(sum(ratios))
    rng = np.random.default_rng(seed)
    splits: Dict[str, List[SkeletonSequence]] = {"train": [], "val": [], "test": []}
    by_class: Dict[int, List[SkeletonSequence]] = {}
    for seq in sequences:
        by_class.setdefault(seq.label, []).append(seq)
    for label in sorted(by_class):
        members = by_class[label]
        order = rng.permutation(len(members))
        n_train = int(round(len(members) * ratios[0] / total))
        n_val = int(round(len(members) * ratios[1] / total))
        n_train = min(n_train, len(members))
        n_val = min(n_val, len(members) - n_train)
        splits["train"].extend(members[j] for j in order[:n_train])
        splits["val"].extend(members[j] for j in order[n_train:n_train + n_val])
        splits["test"].extend(members[j] for j in order[n_train + n_val:])
    return splits
