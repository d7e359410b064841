"""
JSON-lines dataset files.

The first line is a header record
    {"version": 1, "V": int, "C_in": int, "action_names": [...],
     "body_of_action": [...], "body_names": [...]}
optionally carrying "parents" (joint parent map) and "comment". Every
following line is one sample {"id": str, "label": int, "frames": [...]}.
"""

import json
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import DataError, ParseError, SchemaError
from skeleton.sequence import LabelTaxonomy, SkeletonSequence

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
HEADER_KEYS = ("version", "V", "C_in", "action_names", "body_of_action", "body_names")


def _parse_line(line: str, number: int) -> Dict[str, Any]:
    # non-finite literals are turned into NaN so the validator can name the sample
    try:
        record = json.loads(line, parse_constant=lambda _: math.nan)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line=number)
    if not isinstance(record, dict):
        raise ParseError("record is not a JSON object", line=number)
    return record


def read_header(path: str) -> Dict[str, Any]:
    """Return the header record of a dataset file."""
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline()
    if not first.strip():
        raise ParseError("missing header record", line=1)
    header = _parse_line(first, 1)
    missing = [key for key in HEADER_KEYS if key not in header]
    if missing:
        raise ParseError(f"header is missing {', '.join(missing)}", line=1)
    if header["version"] != FORMAT_VERSION:
        raise SchemaError(f"unsupported dataset version {header['version']}")
    return header


def load_dataset(path: str) -> Tuple[List[SkeletonSequence], LabelTaxonomy]:
    """
    Load and validate a JSON-lines skeleton dataset.

    A third coordinate channel (keypoint confidence) is dropped on load.

    Args:
        path: Dataset file

    Returns:
        The sequences in file order and the label taxonomy

    Raises:
        ParseError: For malformed records (with the line number)
        SchemaError: For joint/channel counts that disagree with the header
        DataError: For non-finite coordinates or out-of-range labels
    """
    header = read_header(path)
    joints, channels = int(header["V"]), int(header["C_in"])
    keep = 2 if channels == 3 else channels
    taxonomy = LabelTaxonomy(
        action_names=list(header["action_names"]),
        body_of_action=[int(b) for b in header["body_of_action"]],
        body_names=list(header["body_names"]),
        joint_parents=[int(p) for p in header["parents"]] if header.get("parents") is not None else None,
    ).validate()

    sequences: List[SkeletonSequence] = []
    with open(path, "r", encoding="utf-8") as handle:
        handle.readline()
        for number, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            record = _parse_line(line, number)
            for key in ("id", "label", "frames"):
                if key not in record:
                    raise ParseError(f"record is missing '{key}'", line=number)
            sample_id = str(record["id"])
            try:
                frames = np.asarray(record["frames"], dtype=np.float64)
            except (TypeError, ValueError):
                raise ParseError(f"sample {sample_id}: frames are not a rectangular number array", line=number)
            if frames.ndim != 3 or frames.shape[1] != joints or frames.shape[2] != channels:
                raise SchemaError(
                    f"line {number}: sample {sample_id} has frames {frames.shape}, header says V={joints}, C_in={channels}")
            label = record["label"]
            if not isinstance(label, int) or isinstance(label, bool):
                raise ParseError(f"sample {sample_id}: label must be an integer, got {label!r}", line=number)
            if not 0 <= label < taxonomy.num_actions:
                raise DataError(f"line {number}: sample {sample_id} has label {label} outside [0, {taxonomy.num_actions})")
            sequences.append(SkeletonSequence(frames[:, :, :keep], label, sample_id).validate())

    logger.info(f"Loaded {len(sequences)} sequences from {path} (V={joints}, C_in={keep})")
    return sequences, taxonomy


def save_dataset(
    path: str,
    sequences: Sequence[SkeletonSequence],
    taxonomy: LabelTaxonomy,
    comment: Optional[str] = None,
) -> None:
    """
    Write sequences and taxonomy in the JSON-lines format.

    Raises:
        SchemaError: If the sequences do not share V and C_in
        DataError: If a coordinate is not finite
    """
    if not sequences:
        raise DataError("refusing to write an empty dataset")
    joints, channels = sequences[0].num_joints, sequences[0].in_channels
    header: Dict[str, Any] = {
        "version": FORMAT_VERSION,
        "V": joints,
        "C_in": channels,
        "action_names": list(taxonomy.action_names),
        "body_of_action": [int(b) for b in taxonomy.body_of_action],
        "body_names": list(taxonomy.body_names),
    }
    if taxonomy.joint_parents is not None:
        header["parents"] = [int(p) for p in taxonomy.joint_parents]
    if comment:
        header["comment"] = comment

    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(header) + "\n")
        for seq in sequences:
            seq.validate()
            if seq.num_joints != joints or seq.in_channels != channels:
                raise SchemaError(f"sample {seq.sample_id} has shape {seq.frames.shape}, expected V={joints}, C_in={channels}")
            record = {"id": seq.sample_id, "label": int(seq.label), "frames": seq.frames.tolist()}
            handle.write(json.dumps(record, allow_nan=False) + "\n")
    logger.info(f"Wrote {len(sequences)} sequences to {path}")
