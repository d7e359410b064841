"""
Skeleton sequence and label taxonomy types.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from errors import DataError, SchemaError


@dataclass
class SkeletonSequence:
    """Raw per-frame joint coordinates of one sample.

    `frames` has shape [raw_len, V, C_in].
    """

    frames: np.ndarray
    label: int
    sample_id: str

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)

    @property
    def raw_len(self) -> int:
        return self.frames.shape[0]

    @property
    def num_joints(self) -> int:
        return self.frames.shape[1]

    @property
    def in_channels(self) -> int:
        return self.frames.shape[2]

    def validate(self) -> "SkeletonSequence":
        """
        Check shape and finiteness.

        Raises:
            SchemaError: If frames are not [raw_len >= 1, V, C_in]
            DataError: If any coordinate is NaN or Inf
        """
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise SchemaError(f"sample {self.sample_id}: frames must be [raw_len>=1, V, C_in], got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise DataError(f"sample {self.sample_id}: non-finite coordinate")
        return self


@dataclass
class LabelTaxonomy:
    """Action-level class names and their body-level grouping."""

    action_names: List[str]
    body_of_action: List[int]
    body_names: List[str]
    joint_parents: Optional[List[int]] = field(default=None)

    @property
    def num_actions(self) -> int:
        return len(self.action_names)

    @property
    def num_bodies(self) -> int:
        return len(self.body_names)

    def body_of(self, action: int) -> int:
        return self.body_of_action[action]

    def body_labels(self, actions) -> np.ndarray:
        """Map an array of action indices to body indices."""
        return np.asarray(self.body_of_action, dtype=np.int64)[np.asarray(actions, dtype=np.int64)]

    def validate(self) -> "LabelTaxonomy":
        """
        Check that every action maps to a known body class.

        Raises:
            SchemaError: If the mapping is partial or out of range
        """
        if len(self.body_of_action) != self.num_actions:
            raise SchemaError(
                f"body_of_action has {len(self.body_of_action)} entries for {self.num_actions} actions")
        if self.num_bodies > self.num_actions:
            raise SchemaError(f"{self.num_bodies} body classes exceed {self.num_actions} action classes")
        for action, body in enumerate(self.body_of_action):
            if not 0 <= body < self.num_bodies:
                raise SchemaError(f"action {action} maps to unknown body class {body}")
        return self
