"""
Parameter and multiply-accumulate accounting.
"""

from dataclasses import dataclass, field
from typing import Any, Dict

from network.model import MmnModel

# Reported figures of the reference configuration; not reproducible here
# because its widths and depths are unpublished.
REFERENCE_PARAMS_M = 1.23
REFERENCE_FLOPS_G = 1.48
REFERENCE_LATENCY_MS = 7.15


@dataclass
class ComplexityReport:
    """Exact parameter count and an analytic MAC estimate for one sample."""

    params: int
    macs: int
    layers: Dict[str, int] = field(default_factory=dict)

    @property
    def params_m(self) -> float:
        return self.params / 1e6

    @property
    def gflops(self) -> float:
        return self.macs / 1e9

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params,
            "params_m": round(self.params_m, 4),
            "macs": self.macs,
            "gflops": round(self.gflops, 4),
            "layers": dict(self.layers),
        }


def count_params_flops(model: MmnModel) -> ComplexityReport:
    """
    Count parameters and estimate forward multiply-accumulates at batch 1.

    Only affine maps, convolutions and joint mixing are counted; elementwise
    ops and normalizations are ignored.

    Args:
        model: A constructed network

    Returns:
        ComplexityReport with a per-layer breakdown keyed by module path
    """
    cfg = model.config
    joints = cfg.num_joints
    layers: Dict[str, int] = {"embed": model.embed.macs(cfg.num_frames * joints)}
    for s, stage in enumerate(model.stage):
        frames = cfg.stage_frames(s)
        for b, block in enumerate(stage.block):
            for name, count in block.macs(frames, joints).items():
                layers[f"stage.{s}/block.{b}/{name}"] = count
    reduced = cfg.reduced_frames * joints
    if model.fusion is not None:
        layers["fusion"] = model.fusion.macs(reduced)
        layers["fuse"] = model.fuse.macs(reduced)
    layers["head"] = model.head.macs(1)
    return ComplexityReport(params=model.num_parameters(), macs=int(sum(layers.values())), layers=layers)
