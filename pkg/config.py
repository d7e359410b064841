"""
Configuration utilities for the MMN toolkit.

This module loads environment variables (a `.env` file is honoured through
python-dotenv), defines the typed model/training/run configurations, and
resolves them from defaults, key=value config files, ablation presets and
command-line overrides.
"""

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple

from dotenv import load_dotenv

from errors import ConfigurationError
from skeleton.augmentation import AugmentationParams

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    """Architectural hyperparameters of the network."""

    num_frames: int = 64
    num_joints: int = 44
    in_channels: int = 2
    channels: int = 64
    blocks_per_stage: int = 3
    num_stages: int = 4
    tconv_kernel: int = 5
    mtm_kernel: Tuple[int, int] = (3, 3)
    ffn_expansion: int = 4
    dropout: float = 0.1
    modulation_strategy: str = "modulate"
    msm_enabled: bool = True
    mtm_enabled: bool = True
    # False: MSM modulates the graph-conv branch and MTM the temporal-conv branch,
    # each standardized by its own statistics. True: both modulate X_gc + X_tc,
    # standardized by the temporal-conv branch statistics.
    shared_branch_input: bool = False
    num_classes: int = 52
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    ln_eps: float = 1e-5
    modulation_eps: float = 1e-5
    init_seed: int = 0

    @property
    def reduced_frames(self) -> int:
        """Unified temporal length after the pyramid, T / 2^(L-1)."""
        return self.num_frames // 2 ** (self.num_stages - 1)

    def stage_frames(self, stage: int) -> int:
        """Temporal length processed by 0-based `stage`."""
        return self.num_frames // 2 ** stage

    def validate(self) -> "ModelConfig":
        """
        Check the structural invariants.

        Returns:
            The config itself

        Raises:
            ConfigurationError: If any invariant is violated
        """
        if self.channels <= 0 or self.channels % 4:
            raise ConfigurationError(f"channels must be a positive multiple of 4, got {self.channels}")
        if self.num_stages < 1 or self.blocks_per_stage < 1:
            raise ConfigurationError("num_stages and blocks_per_stage must be at least 1")
        if self.num_frames < 1 or self.num_frames % 2 ** (self.num_stages - 1):
            raise ConfigurationError(
                f"num_frames={self.num_frames} must be divisible by 2^(num_stages-1)={2 ** (self.num_stages - 1)}")
        for k in (self.tconv_kernel, *self.mtm_kernel):
            if k < 1 or k % 2 == 0:
                raise ConfigurationError(f"kernel extents must be odd, got {k}")
        if self.modulation_strategy not in Config.get_modulation_strategies():
            raise ConfigurationError(f"unknown modulation strategy: {self.modulation_strategy}")
        if self.num_classes < 2:
            raise ConfigurationError("num_classes must be at least 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must lie in [0, 1), got {self.dropout}")
        return self


@dataclass
class TrainConfig:
    """Optimization recipe: AdamW with warmup into multi-cycle cosine."""

    base_lr: float = 1e-4
    min_lr: float = 1e-6
    warmup_start_lr: float = 1e-7
    warmup_epochs: int = 20
    cosine_cycles: int = 3
    weight_decay: float = 0.1
    batch_size: int = 64
    epochs: int = 120
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    grad_clip: float = 0.0
    step_schedule: bool = False

    def validate(self) -> "TrainConfig":
        if not self.warmup_start_lr < self.base_lr:
            raise ConfigurationError("warmup_start_lr must be below base_lr")
        if not self.min_lr <= self.base_lr:
            raise ConfigurationError("min_lr must not exceed base_lr")
        if self.cosine_cycles < 1:
            raise ConfigurationError("cosine_cycles must be at least 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be at least 1")
        if self.warmup_epochs < 0:
            raise ConfigurationError("warmup_epochs must be non-negative")
        if self.grad_clip < 0:
            raise ConfigurationError("grad_clip must be non-negative (0 disables clipping)")
        return self


@dataclass
class RunConfig:
    """Everything one command needs: model, training, augmentation and paths."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentationParams = field(default_factory=AugmentationParams)
    dataset: str = ""
    checkpoint: str = ""
    out: str = ""
    modality: str = "joint"
    preset: str = ""

    SECTIONS = ("model", "train", "augment")

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.train.validate()
        self.augment.validate()
        if self.modality not in (Config.MODALITY_JOINT, Config.MODALITY_BONE):
            raise ConfigurationError(f"unknown modality: {self.modality}")
        return self


class Config:
    """Configuration class for the MMN toolkit."""

    # Modulation strategy constants
    MODULATION_MODULATE = "modulate"
    MODULATION_ADD = "add"
    MODULATION_CONCAT = "concat"
    MODULATION_HADAMARD = "hadamard"
    MODULATION_NO_SCALE = "no_scale"
    MODULATION_NO_SHIFT = "no_shift"

    MODALITY_JOINT = "joint"
    MODALITY_BONE = "bone"

    # Ablation presets: A* toggle MSM/MTM, B* swap the modulation strategy,
    # C* toggle the two augmentation halves.
    PRESETS: Dict[str, Dict[str, Any]] = {
        "A1": {"model.msm_enabled": False, "model.mtm_enabled": False},
        "A2": {"model.msm_enabled": True, "model.mtm_enabled": False},
        "A3": {"model.msm_enabled": False, "model.mtm_enabled": True},
        "A4": {"model.msm_enabled": True, "model.mtm_enabled": True},
        "B1": {"model.modulation_strategy": "no_scale"},
        "B2": {"model.modulation_strategy": "no_shift"},
        "B3": {"model.modulation_strategy": "add"},
        "B4": {"model.modulation_strategy": "concat"},
        "B5": {"model.modulation_strategy": "hadamard"},
        "C1": {"augment.skeletal_enabled": False, "augment.temporal_enabled": False},
        "C2": {"augment.skeletal_enabled": True, "augment.temporal_enabled": False},
        "C3": {"augment.skeletal_enabled": False, "augment.temporal_enabled": True},
        "C4": {"augment.skeletal_enabled": True, "augment.temporal_enabled": True},
    }

    @staticmethod
    def get_env(key: str, default: Optional[str] = None) -> Optional[str]:
        """
        Get an environment variable value.

        Args:
            key: The environment variable key
            default: Default value if the environment variable is not found

        Returns:
            The environment variable value or the default value
        """
        return os.environ.get(key, default)

    @staticmethod
    def get_num_threads() -> int:
        """Worker threads for batch assembly (MMN_NUM_THREADS, default 1)."""
        value = os.environ.get("MMN_NUM_THREADS", "1")
        try:
            return max(1, int(value))
        except ValueError:
            raise ConfigurationError(f"MMN_NUM_THREADS must be an integer, got {value!r}")

    @staticmethod
    def get_log_level() -> str:
        return os.environ.get("MMN_LOG_LEVEL", "INFO").upper()

    @staticmethod
    def get_output_dir() -> str:
        return os.environ.get("MMN_OUTPUT_DIR", "runs")

    @staticmethod
    def get_seed() -> int:
        return int(os.environ.get("MMN_SEED", "0"))

    @staticmethod
    def get_modulation_strategies() -> List[str]:
        """
        Get the supported modulation strategies.

        Returns:
            Strategy ids; the first one is the full model
        """
        return [
            Config.MODULATION_MODULATE,
            Config.MODULATION_ADD,
            Config.MODULATION_CONCAT,
            Config.MODULATION_HADAMARD,
            Config.MODULATION_NO_SCALE,
            Config.MODULATION_NO_SHIFT,
        ]

    @staticmethod
    def get_presets() -> List[Dict[str, Any]]:
        """
        Get the list of ablation presets.

        Returns:
            A list of preset dictionaries with id and overrides
        """
        return [{"id": name, "overrides": dict(values)} for name, values in Config.PRESETS.items()]

    @staticmethod
    def read_config_file(path: str) -> Dict[str, str]:
        """
        Read a plain-text key=value config file.

        Blank lines and lines starting with '#' are ignored.

        Args:
            path: File to read

        Returns:
            Raw string values keyed by (optionally section-qualified) field name

        Raises:
            ConfigurationError: If a line has no '='
        """
        values: Dict[str, str] = {}
        with open(path, "r", encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigurationError(f"{path}:{number}: expected key=value, got {line!r}")
                key, value = line.split("=", 1)
                values[key.strip()] = value.strip()
        return values

    @staticmethod
    def field_names(run: RunConfig) -> Dict[str, Tuple[str, str]]:
        """Map every bare and qualified field name to (section, field)."""
        names: Dict[str, Tuple[str, str]] = {}
        for section in RunConfig.SECTIONS:
            for f in dataclasses.fields(getattr(run, section)):
                names[f"{section}.{f.name}"] = (section, f.name)
                names.setdefault(f.name, (section, f.name))
        for f in dataclasses.fields(run):
            if f.name not in RunConfig.SECTIONS:
                names[f.name] = ("", f.name)
        return names

    @staticmethod
    def apply_overrides(run: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
        """
        Apply overrides in place, coercing strings to each field's type.

        Args:
            run: The config to update
            overrides: Values keyed by bare or section-qualified field name

        Returns:
            The updated config

        Raises:
            ConfigurationError: For unknown keys or values that cannot be coerced
        """
        names = Config.field_names(run)
        for key, value in overrides.items():
            key = key.replace("-", "_")
            if key not in names:
                raise ConfigurationError(f"unknown config key: {key}")
            section, name = names[key]
            target = getattr(run, section) if section else run
            current = getattr(target, name)
            setattr(target, name, coerce_value(value, current, key))
        return run

    @staticmethod
    def apply_preset(run: RunConfig, preset: str) -> RunConfig:
        if preset not in Config.PRESETS:
            raise ConfigurationError(f"unknown preset: {preset} (choose from {', '.join(Config.PRESETS)})")
        run.preset = preset
        return Config.apply_overrides(run, Config.PRESETS[preset])

    @staticmethod
    def resolve(
        config_file: Optional[str] = None,
        preset: Optional[str] = None,
        overrides: Optional[Dict[str, Any]] = None,
        defaults: Optional[Dict[str, Any]] = None,
    ) -> RunConfig:
        """
        Build a RunConfig: defaults < config file < preset < explicit overrides.

        Args:
            config_file: Optional key=value file
            preset: Optional ablation preset id
            overrides: Values from command-line flags
            defaults: Values that replace the built-in defaults, such as
                shapes read from a dataset header

        Returns:
            The validated config
        """
        run = RunConfig()
        run.train.seed = Config.get_seed()
        if defaults:
            Config.apply_overrides(run, defaults)
        if config_file:
            file_values = Config.read_config_file(config_file)
            file_preset = file_values.pop("preset", None)
            Config.apply_overrides(run, file_values)
            preset = preset or file_preset
        if preset:
            Config.apply_preset(run, preset)
        if overrides:
            Config.apply_overrides(run, overrides)
        return run.validate()

    @staticmethod
    def to_lines(run: RunConfig) -> List[str]:
        """Serialize a RunConfig as section-qualified key=value lines."""
        lines = []
        for section in RunConfig.SECTIONS:
            lines.extend(f"{section}.{line}" for line in dataclass_to_lines(getattr(run, section)))
        for f in dataclasses.fields(run):
            if f.name not in RunConfig.SECTIONS:
                lines.append(f"{f.name}={format_value(getattr(run, f.name))}")
        return lines

    @staticmethod
    def write_config(run: RunConfig, directory: str) -> str:
        """Persist the resolved config as `config.txt` in `directory`."""
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, "config.txt")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("\n".join(Config.to_lines(run)) + "\n")
        logger.info(f"Wrote resolved config to {path}")
        return path


def format_value(value: Any) -> str:
    """Render a field value the way `coerce_value` reads it back."""
    if isinstance(value, tuple):
        return "x".join(str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def coerce_value(value: Any, current: Any, key: str) -> Any:
    """Convert `value` to the type of `current`."""
    if not isinstance(value, str):
        return tuple(value) if isinstance(current, tuple) else value
    text = value.strip()
    try:
        if isinstance(current, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        if isinstance(current, tuple):
            parts = [p for p in text.replace(",", "x").replace("×", "x").split("x") if p]
            kind = type(current[0]) if current else float
            return tuple(kind(p) for p in parts)
    except ValueError:
        raise ConfigurationError(f"cannot read {key}={value!r} as {type(current).__name__}")
    return text


def dataclass_to_lines(obj: Any) -> List[str]:
    return [f"{f.name}={format_value(getattr(obj, f.name))}" for f in dataclasses.fields(obj)]


def dataclass_from_lines(cls, lines: Iterable[str]):
    """Rebuild a config dataclass from key=value lines; unknown keys are ignored."""
    obj = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    for line in lines:
        line = line.strip()
        if not line or "=" not in line:
            continue
        key, value = line.split("=", 1)
        if key in known:
            setattr(obj, key, coerce_value(value, getattr(obj, key), key))
    return obj
