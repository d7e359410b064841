"""
Bone modality: each joint expressed relative to its parent.
"""

from typing import List, Optional, Sequence

import numpy as np

from errors import ConfigurationError


def check_parents(parents: Sequence[int], num_joints: int) -> List[int]:
    """
    Validate a joint-parent map.

    Args:
        parents: parents[v] is the parent of joint v; roots are their own parent
        num_joints: Expected number of joints V

    Returns:
        The map as a list of ints

    Raises:
        ConfigurationError: If the map is partial, out of range, or cyclic
    """
    parents = [int(p) for p in parents]
    if len(parents) != num_joints:
        raise ConfigurationError(f"parent map has {len(parents)} entries for {num_joints} joints")
    for v, p in enumerate(parents):
        if not 0 <= p < num_joints:
            raise ConfigurationError(f"parent of joint {v} is {p}, outside [0, {num_joints})")
    for v in range(num_joints):
        node = v
        for _ in range(num_joints):
            if parents[node] == node:
                break
            node = parents[node]
        else:
            raise ConfigurationError(f"parent map is cyclic: joint {v} never reaches a root")
    return parents


def default_parents(num_joints: int) -> List[int]:
    """A kinematic chain: joint v hangs off v-1 and joint 0 is the root."""
    return [0] + list(range(num_joints - 1))


def to_bone(frames: np.ndarray, parents: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Convert joint coordinates [..., V, C] into bones joint[v] - joint[parent(v)].

    Root bones are zero. Without a parent map the chain default is used.
    """
    frames = np.asarray(frames, dtype=np.float64)
    num_joints = frames.shape[-2]
    parents = check_parents(default_parents(num_joints) if parents is None else parents, num_joints)
    return frames - frames[..., parents, :]
