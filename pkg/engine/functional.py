"""
Differentiable primitive ops.

Each op computes its forward values with numpy and registers a backward
rule through `Tensor.from_op`. Ops that act on skeleton features follow the
layout [..., T, V, C]: time is axis -3, joints axis -2, channels axis -1,
with any number of leading batch axes.
"""

import builtins
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from engine.tensor import ArrayLike, Tensor
from errors import ConfigurationError, DataError, DimensionError

TIME_AXIS = -3
JOINT_AXIS = -2

Operand = Union[Tensor, ArrayLike]

_GELU_C = math.sqrt(2.0 / math.pi)


def as_tensor(value: Operand) -> Tensor:
    """Return `value` itself if it is a Tensor, else a constant Tensor."""
    return value if isinstance(value, Tensor) else Tensor(value, requires_grad=False)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum `grad` over the axes numpy broadcasting added to reach `grad.shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), backward, "add")


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return Tensor.from_op(a.data * b.data, (a, b), backward, "mul")


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        return unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)

    return Tensor.from_op(out, (a, b), backward, "div")


def neg(x: Tensor) -> Tensor:
    return Tensor.from_op(-x.data, (x,), lambda g: (-g,), "neg")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return Tensor.from_op(out, (x,), lambda g: (0.5 * g / out,), "sqrt")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return Tensor.from_op(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    # tanh form avoids overflow in exp for large |x|
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return Tensor.from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v ** 3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner),)

    return Tensor.from_op(out, (x,), backward, "gelu")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, (x,), backward, "softmax")


# ---------------------------------------------------------------------------
# Reductions and shape ops
# ---------------------------------------------------------------------------

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _normalize_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return Tensor.from_op(out, (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape),)

    return Tensor.from_op(out, (x,), backward, "mean")


def var(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Population variance over `axis`."""
    centered = x - mean(x, axis=axis, keepdims=True)
    return mean(centered * centered, axis=axis, keepdims=keepdims)


def std(x: Tensor, axis=None, keepdims: bool = False, eps: float = 0.0) -> Tensor:
    """Population standard deviation, sqrt(var + eps)."""
    return sqrt(var(x, axis=axis, keepdims=keepdims) + eps)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Tensor.from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along `axis` (default: channels)."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise DimensionError(f"concat shapes {ref} and {t.shape} disagree outside axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=ax)

    def backward(g):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=ax))

    return Tensor.from_op(out, tuple(tensors), backward, "concat")


def slice_axis(x: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    """Take `x[..., start:stop]` along `axis` (default: channels)."""
    ax = axis % x.ndim
    index = [slice(None)] * x.ndim
    index[ax] = slice(start, stop)
    index = tuple(index)
    out = x.data[index]

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return Tensor.from_op(out, (x,), backward, "slice")


def split_channels(x: Tensor, sizes: Sequence[int]) -> List[Tensor]:
    """Split the channel axis into consecutive pieces of the given sizes."""
    if builtins.sum(sizes) != x.shape[-1]:
        raise DimensionError(f"split sizes {list(sizes)} do not cover {x.shape[-1]} channels")
    pieces, start = [], 0
    for size in sizes:
        pieces.append(slice_axis(x, start, start + size))
        start += size
    return pieces


def temporal_diff(x: Tensor, axis: int = TIME_AXIS) -> Tensor:
    """First-order difference x[t+1] - x[t]; T frames become T-1 (none for a single frame)."""
    ax = axis % x.ndim
    if x.shape[ax] < 1:
        raise DimensionError(f"temporal_diff needs at least 1 frame, got shape {x.shape}")
    head = [slice(None)] * x.ndim
    tail = [slice(None)] * x.ndim
    head[ax], tail[ax] = slice(1, None), slice(None, -1)
    head, tail = tuple(head), tuple(tail)
    out = x.data[head] - x.data[tail]

    def backward(g):
        dx = np.zeros_like(x.data)
        dx[head] += g
        dx[tail] -= g
        return (dx,)

    return Tensor.from_op(out, (x,), backward, "temporal_diff")


def pad_leading(x: Tensor, count: int = 1, axis: int = TIME_AXIS) -> Tensor:
    """Prepend `count` zero frames along `axis`."""
    ax = axis % x.ndim
    widths = [(0, 0)] * x.ndim
    widths[ax] = (count, 0)
    out = np.pad(x.data, widths)

    def backward(g):
        index = [slice(None)] * x.ndim
        index[ax] = slice(count, None)
        return (g[tuple(index)],)

    return Tensor.from_op(out, (x,), backward, "pad_leading")


def temporal_downsample_by_2(x: Tensor, axis: int = TIME_AXIS) -> Tensor:
    """Average adjacent frame pairs, halving the time extent."""
    ax = axis % x.ndim
    length = x.shape[ax]
    if length % 2:
        raise DimensionError(f"temporal_downsample_by_2 needs an even frame count, got {length} in shape {x.shape}")
    even = [slice(None)] * x.ndim
    odd = [slice(None)] * x.ndim
    even[ax], odd[ax] = slice(0, None, 2), slice(1, None, 2)
    even, odd = tuple(even), tuple(odd)
    out = 0.5 * (x.data[even] + x.data[odd])

    def backward(g):
        dx = np.empty_like(x.data)
        dx[even] = 0.5 * g
        dx[odd] = 0.5 * g
        return (dx,)

    return Tensor.from_op(out, (x,), backward, "downsample2")


def global_mean_pool(x: Tensor) -> Tensor:
    """Mean over the time and joint axes: [..., T, V, C] -> [..., C]."""
    return mean(x, axis=(x.ndim + TIME_AXIS, x.ndim + JOINT_AXIS))


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} are incompatible")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor.from_op(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Channel-wise affine map x[..., Cin] @ W[Cin, Cout] + b[Cout]."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear input {x.shape} does not match weight {weight.shape}")
    flat = x.data.reshape(-1, x.shape[-1])
    out = flat @ weight.data
    if bias is not None:
        out = out + bias.data
    out = out.reshape(x.shape[:-1] + (weight.shape[1],))

    def backward(g):
        g2 = g.reshape(-1, weight.shape[1])
        dx = (g2 @ weight.data.T).reshape(x.shape)
        dw = flat.T @ g2
        if bias is None:
            return dx, dw
        return dx, dw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward, "linear")


def joint_mix(adjacency: Tensor, x: Tensor) -> Tensor:
    """Mix joints per frame: y[..., v, c] = sum_u A[v, u] x[..., u, c]."""
    if adjacency.shape != (x.shape[JOINT_AXIS], x.shape[JOINT_AXIS]):
        raise DimensionError(f"adjacency {adjacency.shape} does not match joints of {x.shape}")
    out = np.einsum("vu,...uc->...vc", adjacency.data, x.data)

    def backward(g):
        d_adj = np.einsum("nvc,nuc->vu", g.reshape((-1,) + g.shape[-2:]), x.data.reshape((-1,) + x.shape[-2:]))
        dx = np.einsum("vu,...vc->...uc", adjacency.data, g)
        return d_adj, dx

    return Tensor.from_op(out, (adjacency, x), backward, "joint_mix")


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the channel axis, then apply gain and bias."""
    if x.shape[-1] != gain.shape[-1]:
        raise DimensionError(f"layer_norm input {x.shape} does not match gain {gain.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        lead = tuple(range(x.ndim - 1))
        d_gain = (g * xhat).sum(axis=lead)
        d_bias = g.sum(axis=lead)
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, d_gain, d_bias

    return Tensor.from_op(out, (x, gain, bias), backward, "layer_norm")


class BatchNormState:
    """Running per-channel statistics of a batch-norm layer."""

    def __init__(self, num_channels: int):
        self.running_mean = np.zeros(num_channels)
        self.running_var = np.ones(num_channels)
        self.initialized = False
        self.num_batches = 0

    def settle(self, mean: ArrayLike = 0.0, var: ArrayLike = 1.0) -> None:
        """Set the running statistics explicitly and mark them usable."""
        self.running_mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), self.running_mean.shape).copy()
        self.running_var = np.broadcast_to(np.asarray(var, dtype=np.float64), self.running_var.shape).copy()
        self.initialized = True


def batch_norm(
    x: Tensor,
    state: BatchNormState,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """
    Batch normalization over every axis but the last, without affine.

    Args:
        x: Input of shape [..., C]
        state: Running statistics, updated in place while training
        training: Use batch statistics (True) or the running state (False)
        momentum: Weight of the new batch in the running average
        eps: Variance guard

    Returns:
        The normalized tensor

    Raises:
        ConfigurationError: In eval mode when the running state was never set
    """
    if x.shape[-1] != state.running_mean.shape[0]:
        raise DimensionError(f"batch_norm input {x.shape} does not match {state.running_mean.shape[0]} channels")
    lead = tuple(range(x.ndim - 1))
    if training:
        mu = x.data.mean(axis=lead)
        centered = x.data - mu
        variance = (centered * centered).mean(axis=lead)
        inv = 1.0 / np.sqrt(variance + eps)
        xhat = centered * inv
        state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mu
        state.running_var = (1.0 - momentum) * state.running_var + momentum * variance
        state.initialized = True
        state.num_batches += 1

        def backward(g):
            return (inv * (g - g.mean(axis=lead) - xhat * (g * xhat).mean(axis=lead)),)

        return Tensor.from_op(xhat, (x,), backward, "batch_norm")

    if not state.initialized:
        raise ConfigurationError("batch_norm in eval mode needs initialized running statistics")
    inv = 1.0 / np.sqrt(state.running_var + eps)
    out = (x.data - state.running_mean) * inv
    return Tensor.from_op(out, (x,), lambda g: (g * inv,), "batch_norm")


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------

def _check_odd(*extents: int) -> None:
    for k in extents:
        if k < 1 or k % 2 == 0:
            raise ConfigurationError(f"convolution kernel extents must be odd, got {extents}")


def conv_temporal(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Convolve along time independently per joint, zero "same" padding.

    Args:
        x: Input [..., T, V, Cin]
        weight: Kernel [k, Cin, Cout] with k odd
        bias: Optional [Cout]

    Returns:
        Output [..., T, V, Cout]
    """
    k, c_in, c_out = weight.shape
    _check_odd(k)
    if x.shape[-1] != c_in:
        raise DimensionError(f"conv_temporal input {x.shape} does not match kernel {weight.shape}")
    pad = (k - 1) // 2
    length = x.shape[TIME_AXIS]
    widths = [(0, 0)] * x.ndim
    widths[x.ndim + TIME_AXIS] = (pad, pad)
    xp = np.pad(x.data, widths)

    def window(j: int):
        index = [slice(None)] * x.ndim
        index[x.ndim + TIME_AXIS] = slice(j, j + length)
        return tuple(index)

    out = np.zeros(x.shape[:-1] + (c_out,))
    for j in range(k):
        out += xp[window(j)] @ weight.data[j]
    if bias is not None:
        out += bias.data

    def backward(g):
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(weight.data)
        g2 = g.reshape(-1, c_out)
        for j in range(k):
            dxp[window(j)] += g @ weight.data[j].T
            dw[j] = xp[window(j)].reshape(-1, c_in).T @ g2
        dx = dxp[window(pad)]
        if bias is None:
            return dx, dw
        return dx, dw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward, "conv_temporal")


def conv_2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    2-D convolution over (time, joint) with zero "same" padding.

    Args:
        x: Input [..., T, V, Cin]
        weight: Kernel [kt, kv, Cin, Cout] with kt, kv odd
        bias: Optional [Cout]

    Returns:
        Output [..., T, V, Cout]
    """
    kt, kv, c_in, c_out = weight.shape
    _check_odd(kt, kv)
    if x.shape[-1] != c_in:
        raise DimensionError(f"conv_2d input {x.shape} does not match kernel {weight.shape}")
    pt, pv = (kt - 1) // 2, (kv - 1) // 2
    length, joints = x.shape[TIME_AXIS], x.shape[JOINT_AXIS]
    widths = [(0, 0)] * x.ndim
    widths[x.ndim + TIME_AXIS] = (pt, pt)
    widths[x.ndim + JOINT_AXIS] = (pv, pv)
    xp = np.pad(x.data, widths)

    def window(i: int, j: int):
        index = [slice(None)] * x.ndim
        index[x.ndim + TIME_AXIS] = slice(i, i + length)
        index[x.ndim + JOINT_AXIS] = slice(j, j + joints)
        return tuple(index)

    out = np.zeros(x.shape[:-1] + (c_out,))
    for i in range(kt):
        for j in range(kv):
            out += xp[window(i, j)] @ weight.data[i, j]
    if bias is not None:
        out += bias.data

    def backward(g):
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(weight.data)
        g2 = g.reshape(-1, c_out)
        for i in range(kt):
            for j in range(kv):
                dxp[window(i, j)] += g @ weight.data[i, j].T
                dw[i, j] = xp[window(i, j)].reshape(-1, c_in).T @ g2
        dx = dxp[window(pt, pv)]
        if bias is None:
            return dx, dw
        return dx, dw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward, "conv_2d")


# ---------------------------------------------------------------------------
# Regularization and loss
# ---------------------------------------------------------------------------

def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout; the identity outside training or when p == 0."""
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ConfigurationError("dropout in training mode needs an explicit random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return Tensor.from_op(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """
    Mean negative log-likelihood of `labels` under softmax(`logits`).

    Args:
        logits: Scores [B, K]
        labels: Class indices, one per row

    Returns:
        Scalar loss tensor

    Raises:
        DataError: If a label falls outside [0, K)
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy logits {logits.shape} and labels {labels.shape} disagree")
    batch, classes = logits.shape
    for i, label in enumerate(labels):
        if not 0 <= label < classes:
            raise DataError(f"label {int(label)} of sample {i} is outside [0, {classes})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(batch)
    loss = (log_norm - shifted[rows, labels]).mean()

    def backward(g):
        probs = np.exp(shifted - log_norm[:, None])
        probs[rows, labels] -= 1.0
        return (g * probs / batch,)

    return Tensor.from_op(np.asarray(loss), (logits,), backward, "cross_entropy")
