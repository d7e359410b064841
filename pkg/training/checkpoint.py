"""
Checkpoint manager.

A checkpoint is a single zip archive holding:
    manifest.txt          format version and the ModelConfig as key=value lines
    param/<path>.npy      one entry per parameter tensor
    buffer/<path>.npy     batch-norm statistics and fixed constants
    optimizer/<m|v>/<path>.npy   AdamW moments, when saved mid-training
    train_state.json      epoch, step and best-metric bookkeeping

Arrays are stored as .npy records (shape header, little-endian float64).
Paths are the model's hierarchical names, e.g. stage.2/block.0/msm/gconv.W.
"""

import io
import json
import logging
import os
import zipfile
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import ModelConfig, dataclass_from_lines, dataclass_to_lines
from engine import BatchNormState
from errors import DataError, SchemaError
from network.model import MmnModel

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1
CHECKPOINT_SUFFIX = ".ckpt"
BN_FIELDS = ("running_mean", "running_var", "meta")


@dataclass
class TrainState:
    """Loop position and bookkeeping saved alongside the weights."""

    epoch: int = 0
    step: int = 0
    optimizer_step: int = 0
    seed: int = 0
    best_val_f1_mean: float = -1.0
    best_epoch: int = -1
    best_checkpoint: str = ""
    history: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainState":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class LoadedCheckpoint:
    model: MmnModel
    optimizer_arrays: Dict[str, np.ndarray]
    train_state: Optional[TrainState]
    path: str


def _write_array(archive: zipfile.ZipFile, name: str, array: np.ndarray) -> None:
    buffer = io.BytesIO()
    np.lib.format.write_array(buffer, np.ascontiguousarray(array, dtype="<f8"), allow_pickle=False)
    archive.writestr(name, buffer.getvalue())


def _read_array(archive: zipfile.ZipFile, name: str) -> np.ndarray:
    return np.lib.format.read_array(io.BytesIO(archive.read(name)), allow_pickle=False).astype(np.float64)


def _entries(archive: zipfile.ZipFile, prefix: str) -> Dict[str, str]:
    """Map stripped path -> entry name for every .npy entry under prefix."""
    out = {}
    for name in archive.namelist():
        if name.startswith(prefix) and name.endswith(".npy"):
            out[name[len(prefix):-len(".npy")]] = name
    return out


class CheckpointManager:
    """
    Manager for saving, listing and loading checkpoints in one directory.
    """

    def __init__(self, directory: str):
        """
        Initialize the checkpoint manager.

        Args:
            directory: Directory holding the checkpoint archives; created if missing
        """
        self.directory = directory
        os.makedirs(self.directory, exist_ok=True)

    def path_for(self, name: str) -> str:
        if not name.endswith(CHECKPOINT_SUFFIX):
            name += CHECKPOINT_SUFFIX
        return os.path.join(self.directory, name)

    def save(
        self,
        name: str,
        model: MmnModel,
        optimizer_arrays: Optional[Dict[str, np.ndarray]] = None,
        train_state: Optional[TrainState] = None,
    ) -> str:
        """
        Write a checkpoint archive.

        Args:
            name: File name inside the directory (".ckpt" is appended if missing)
            model: Network whose parameters and buffers are stored
            optimizer_arrays: AdamW moments keyed "m/<path>" and "v/<path>"
            train_state: Loop bookkeeping

        Returns:
            Path of the written archive
        """
        path = self.path_for(name)
        tmp_path = path + ".tmp"
        with zipfile.ZipFile(tmp_path, "w", compression=zipfile.ZIP_STORED) as archive:
            manifest = [f"format={CHECKPOINT_FORMAT}"] + dataclass_to_lines(model.config)
            archive.writestr("manifest.txt", "\n".join(manifest) + "\n")
            for param_name, param in model.named_parameters():
                _write_array(archive, f"param/{param_name}.npy", param.data)
            for buffer_name, buf in model.named_buffers():
                if isinstance(buf, BatchNormState):
                    _write_array(archive, f"buffer/{buffer_name}.running_mean.npy", buf.running_mean)
                    _write_array(archive, f"buffer/{buffer_name}.running_var.npy", buf.running_var)
                    meta = np.array([float(buf.initialized), float(buf.num_batches)])
                    _write_array(archive, f"buffer/{buffer_name}.meta.npy", meta)
                else:
                    _write_array(archive, f"buffer/{buffer_name}.npy", buf)
            for key, array in (optimizer_arrays or {}).items():
                _write_array(archive, f"optimizer/{key}.npy", array)
            if train_state is not None:
                archive.writestr("train_state.json", json.dumps(train_state.to_dict(), indent=2))
        os.replace(tmp_path, path)
        logger.info(f"Saved checkpoint to {path}")
        return path

    def list_checkpoints(self) -> List[str]:
        """List checkpoint paths in the directory, sorted by name."""
        names = sorted(n for n in os.listdir(self.directory) if n.endswith(CHECKPOINT_SUFFIX))
        return [os.path.join(self.directory, n) for n in names]

    @staticmethod
    def read_config(path: str) -> ModelConfig:
        """Read only the ModelConfig manifest of a checkpoint."""
        if not os.path.isfile(path):
            raise DataError(f"checkpoint not found: {path}")
        try:
            with zipfile.ZipFile(path) as archive:
                lines = archive.read("manifest.txt").decode("utf-8").splitlines()
        except (zipfile.BadZipFile, KeyError) as e:
            raise SchemaError(f"{path} is not a checkpoint archive: {e}")
        header = dict(line.split("=", 1) for line in lines if "=" in line)
        if int(header.get("format", -1)) != CHECKPOINT_FORMAT:
            raise SchemaError(f"{path}: unsupported checkpoint format {header.get('format')}")
        return dataclass_from_lines(ModelConfig, lines)

    @staticmethod
    def load(path: str, model: Optional[MmnModel] = None) -> LoadedCheckpoint:
        """
        Load a checkpoint.

        Args:
            path: Archive path
            model: Network to fill in; built from the manifest when omitted

        Returns:
            LoadedCheckpoint with the model, optimizer arrays and train state

        Raises:
            DataError: If the file is missing
            SchemaError: If the archive does not match the model's parameters
        """
        config = CheckpointManager.read_config(path)
        if model is None:
            model = MmnModel(config)
        with zipfile.ZipFile(path) as archive:
            params = _entries(archive, "param/")
            expected = dict(model.named_parameters())
            if set(params) != set(expected):
                missing = sorted(set(expected) - set(params))
                extra = sorted(set(params) - set(expected))
                raise SchemaError(f"{path}: parameter names differ (missing {missing[:3]}, unexpected {extra[:3]})")
            for param_name, param in expected.items():
                array = _read_array(archive, params[param_name])
                if array.shape != param.shape:
                    raise SchemaError(f"{path}: {param_name} has shape {array.shape}, model expects {param.shape}")
                param.data = array

            buffers = _entries(archive, "buffer/")
            for buffer_name, buf in model.named_buffers():
                if isinstance(buf, BatchNormState):
                    keys = [f"{buffer_name}.{suffix}" for suffix in BN_FIELDS]
                    if any(k not in buffers for k in keys):
                        raise SchemaError(f"{path}: missing batch-norm state {buffer_name}")
                    buf.running_mean = _read_array(archive, buffers[keys[0]])
                    buf.running_var = _read_array(archive, buffers[keys[1]])
                    meta = _read_array(archive, buffers[keys[2]])
                    buf.initialized = bool(meta[0])
                    buf.num_batches = int(meta[1])
                elif buffer_name not in buffers:
                    raise SchemaError(f"{path}: missing buffer {buffer_name}")

            optimizer_arrays = {key: _read_array(archive, name)
                                for key, name in _entries(archive, "optimizer/").items()}
            train_state = None
            if "train_state.json" in archive.namelist():
                train_state = TrainState.from_dict(json.loads(archive.read("train_state.json")))
        logger.info(f"Loaded checkpoint from {path}")
        return LoadedCheckpoint(model, optimizer_arrays, train_state, path)


def load_model(path: str) -> Tuple[MmnModel, Optional[TrainState]]:
    """Build a model from a checkpoint and put it in eval mode."""
    loaded = CheckpointManager.load(path)
    loaded.model.eval()
    return loaded.model, loaded.train_state
