"""
AdamW with decoupled weight decay.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from config import TrainConfig
from engine import Tensor
from errors import DimensionError, NonFiniteError


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter path, and the step count."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adamw_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    cfg: TrainConfig,
) -> None:
    """
    Update `params` in place.

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)

    Args:
        params: Parameter arrays by path
        grads: Gradient arrays by path, same keys and shapes
        state: Moment accumulators, updated in place
        lr: Learning rate
        cfg: Supplies betas, eps and weight decay

    Raises:
        DimensionError: If a gradient's shape differs from its parameter's
        NonFiniteError: If a gradient holds NaN or Inf; nothing is updated
    """
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise DimensionError(f"gradient of {name} has shape {grad.shape}, parameter {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite gradient for parameter {name}", source=name)

    state.t += 1
    bias1 = 1.0 - cfg.beta1 ** state.t
    bias2 = 1.0 - cfg.beta2 ** state.t
    for name, param in params.items():
        grad = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param)
            v = np.zeros_like(param)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        m_hat = m / bias1
        v_hat = v / bias2
        param -= lr * (m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * param)


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm; returns the norm before clipping."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for name in grads:
            grads[name] = grads[name] * scale
    return total


class AdamW:
    """
    AdamW over a model's named parameters.

    Buffers (batch-norm statistics, fixed embeddings) are not parameters and
    are never touched.
    """

    def __init__(self, named_params: Dict[str, Tensor], cfg: TrainConfig, state: Optional[AdamState] = None):
        self.params = dict(named_params)
        self.cfg = cfg
        self.state = state if state is not None else AdamState()
        self.last_grad_norm = 0.0

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def step(self, lr: float) -> None:
        """Apply one update; parameters without a gradient are treated as having zero gradient."""
        grads = {
            name: (param.grad if param.grad is not None else np.zeros_like(param.data))
            for name, param in self.params.items()
        }
        self.last_grad_norm = clip_grad_norm(grads, self.cfg.grad_clip)
        adamw_step({name: p.data for name, p in self.params.items()}, grads, self.state, lr, self.cfg)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {}
        for name, m in self.state.m.items():
            arrays[f"m/{name}"] = m
            arrays[f"v/{name}"] = self.state.v[name]
        return arrays

    def load_state_arrays(self, arrays: Dict[str, np.ndarray], t: int) -> None:
        state = AdamState(t=t)
        for key, value in arrays.items():
            kind, _, name = key.partition("/")
            if name not in self.params:
                raise DimensionError(f"optimizer state for unknown parameter {name}")
            if value.shape != self.params[name].shape:
                raise DimensionError(f"optimizer state {key} has shape {value.shape}, "
                                     f"parameter {self.params[name].shape}")
            getattr(state, kind)[name] = value.copy()
        self.state = state
