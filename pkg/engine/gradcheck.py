"""
Finite-difference gradient checking.

Analytic gradients from `Tensor.backward` are compared against central
differences. The relative error of one input is

    max |a - n| / max(max |a|, max |n|, 1e-8)

taken over all of its elements, so elements whose gradient is tiny compared
with the rest of the tensor do not dominate the report through round-off.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from engine.tensor import Tensor, detect_anomaly, no_grad
from errors import DimensionError

logger = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-8


@dataclass
class GradcheckResult:
    """Comparison for a single input tensor."""

    name: str
    max_rel_error: float
    max_abs_error: float
    worst_index: tuple


@dataclass
class GradcheckReport:
    """Per-input comparison of analytic and numeric gradients."""

    results: List[GradcheckResult] = field(default_factory=list)
    tolerance: float = 1e-4

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.results), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def to_dict(self) -> Dict[str, object]:
        return {
            "passed": self.passed,
            "tolerance": self.tolerance,
            "max_rel_error": self.max_rel_error,
            "inputs": {r.name: r.max_rel_error for r in self.results},
        }


def numeric_gradient(f: Callable[..., Tensor], inputs: Sequence[Tensor], index: int, eps: float) -> np.ndarray:
    """Central-difference gradient of scalar `f(*inputs)` w.r.t. `inputs[index]`."""
    target = inputs[index].data
    grad = np.zeros_like(target)
    flat_target = target.reshape(-1)
    flat_grad = grad.reshape(-1)
    with no_grad():
        for i in range(flat_target.size):
            original = flat_target[i]
            flat_target[i] = original + eps
            plus = float(f(*inputs).data)
            flat_target[i] = original - eps
            minus = float(f(*inputs).data)
            flat_target[i] = original
            flat_grad[i] = (plus - minus) / (2.0 * eps)
    return grad


def gradcheck(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    tolerance: float = 1e-4,
    names: Optional[Sequence[str]] = None,
) -> GradcheckReport:
    """
    Compare analytic and central-difference gradients of a scalar function.

    Args:
        f: Deterministic function of `inputs` returning a one-element tensor
        inputs: Tensors to differentiate; their values are perturbed in place
            and restored
        eps: Finite-difference step
        tolerance: Relative error below which the report passes
        names: Labels for the inputs in the report

    Returns:
        A GradcheckReport with one result per input

    Raises:
        NonFiniteError: If any op produces NaN or Inf during the check
        DimensionError: If `f` does not return a single value
    """
    names = list(names) if names is not None else [t.name or f"input{i}" for i, t in enumerate(inputs)]
    report = GradcheckReport(tolerance=tolerance)

    with detect_anomaly():
        for tensor in inputs:
            tensor.requires_grad = True
            tensor.zero_grad()
        output = f(*inputs)
        if output.size != 1:
            raise DimensionError(f"gradcheck needs a scalar function, got shape {output.shape}")
        output.backward()
        analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

        for i, name in enumerate(names):
            numeric = numeric_gradient(f, inputs, i, eps)
            diff = np.abs(analytic[i] - numeric)
            scale = max(float(np.abs(analytic[i]).max(initial=0.0)),
                        float(np.abs(numeric).max(initial=0.0)),
                        DENOMINATOR_FLOOR)
            worst = np.unravel_index(int(np.argmax(diff)), diff.shape) if diff.size else ()
            result = GradcheckResult(
                name=name,
                max_rel_error=float(diff.max(initial=0.0)) / scale,
                max_abs_error=float(diff.max(initial=0.0)),
                worst_index=tuple(int(j) for j in worst),
            )
            report.results.append(result)
            logger.debug(f"gradcheck {name}: rel={result.max_rel_error:.3e} abs={result.max_abs_error:.3e}")

    logger.info(f"gradcheck over {len(inputs)} inputs: max rel err {report.max_rel_error:.3e}")
    return report


def _weighted(op: Callable[..., Tensor], weight: np.ndarray) -> Callable[..., Tensor]:
    """Reduce an op's output to a scalar with fixed random weights."""
    from engine import functional as F

    def f(*inputs: Tensor) -> Tensor:
        return F.sum(F.mul(op(*inputs), weight))

    return f


def op_cases(seed: int = 0) -> List[tuple]:
    """
    Small gradcheck problems covering every primitive op.

    Returns:
        (name, scalar function, input tensors) triples
    """
    from engine import functional as F

    rng = np.random.default_rng(seed)

    def t(*shape, low=-1.0, high=1.0):
        return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)

    def w(*shape):
        return rng.normal(size=shape)

    bn_state = F.BatchNormState(3)
    cases = [
        ("add", F.add, [t(2, 3), t(3)], (2, 3)),
        ("sub", F.sub, [t(2, 3), t(2, 1)], (2, 3)),
        ("mul", F.mul, [t(2, 3), t(2, 3)], (2, 3)),
        ("div", F.div, [t(2, 3), t(2, 3, low=0.5, high=2.0)], (2, 3)),
        ("neg", F.neg, [t(4)], (4,)),
        ("sqrt", F.sqrt, [t(4, low=0.5, high=2.0)], (4,)),
        ("exp", F.exp, [t(4)], (4,)),
        ("log", F.log, [t(4, low=0.5, high=2.0)], (4,)),
        ("tanh", F.tanh, [t(4)], (4,)),
        ("sigmoid", F.sigmoid, [t(4)], (4,)),
        ("gelu", F.gelu, [t(2, 4, low=-3.0, high=3.0)], (2, 4)),
        ("softmax", F.softmax, [t(2, 5)], (2, 5)),
        ("sum", lambda x: F.sum(x, axis=1), [t(2, 3, 4)], (2, 4)),
        ("mean", lambda x: F.mean(x, axis=(0, 2), keepdims=True), [t(2, 3, 4)], (1, 3, 1)),
        ("var", lambda x: F.var(x, axis=0), [t(5, 3)], (3,)),
        ("std", lambda x: F.std(x, axis=0, eps=1e-10), [t(5, 3)], (3,)),
        ("reshape", lambda x: F.reshape(x, (3, 4)), [t(2, 6)], (3, 4)),
        ("concat", lambda a, b: F.concat([a, b]), [t(2, 3), t(2, 2)], (2, 5)),
        ("slice", lambda x: F.slice_axis(x, 1, 3), [t(2, 4)], (2, 2)),
        ("temporal_diff", F.temporal_diff, [t(4, 3, 2)], (3, 3, 2)),
        ("pad_leading", F.pad_leading, [t(3, 3, 2)], (4, 3, 2)),
        ("downsample2", F.temporal_downsample_by_2, [t(4, 3, 2)], (2, 3, 2)),
        ("global_mean_pool", F.global_mean_pool, [t(2, 4, 3, 2)], (2, 2)),
        ("matmul", F.matmul, [t(3, 4), t(4, 2)], (3, 2)),
        ("linear", F.linear, [t(2, 3, 4), t(4, 5), t(5)], (2, 3, 5)),
        ("joint_mix", F.joint_mix, [t(3, 3), t(2, 3, 4)], (2, 3, 4)),
        ("layer_norm", lambda x, g, b: F.layer_norm(x, g, b), [t(2, 3, 4), t(4), t(4)], (2, 3, 4)),
        ("batch_norm", lambda x: F.batch_norm(x, bn_state, training=True), [t(2, 4, 3)], (2, 4, 3)),
        ("conv_temporal", F.conv_temporal, [t(5, 2, 3), t(3, 3, 2), t(2)], (5, 2, 2)),
        ("conv_2d", F.conv_2d, [t(5, 4, 2), t(3, 3, 2, 3)], (5, 4, 3)),
        ("dropout", lambda x: F.dropout(x, 0.3, np.random.default_rng(seed), training=True), [t(3, 4)], (3, 4)),
    ]
    out = [(name, _weighted(op, w(*shape)), inputs) for name, op, inputs, shape in cases]
    labels = rng.integers(0, 4, size=3)
    out.append(("cross_entropy", lambda x: F.cross_entropy(x, labels), [t(3, 4)]))
    return out


def op_suite(seed: int = 0, eps: float = 1e-5, tolerance: float = 1e-4) -> Dict[str, GradcheckReport]:
    """Run gradcheck on every primitive op case."""
    return {name: gradcheck(f, inputs, eps=eps, tolerance=tolerance)
            for name, f, inputs in op_cases(seed)}
