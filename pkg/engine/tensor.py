"""
Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a float64 numpy array. Every primitive op in
`engine.functional` builds its output with `Tensor.from_op`, attaching the
parents and a backward rule. `Tensor.backward()` collects the executed ops
into a ComputationRecord and replays it in reverse topological order.
"""

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import NonFiniteError

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

# Grad mode and anomaly mode are per thread so separate graphs can be built
# concurrently.
_mode = threading.local()


def is_grad_enabled() -> bool:
    """Return True when ops record their inputs for backpropagation."""
    return getattr(_mode, "grad_enabled", True)


def is_anomaly_enabled() -> bool:
    """Return True when ops check their outputs for non-finite values."""
    return getattr(_mode, "anomaly", False)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    previous = is_grad_enabled()
    _mode.grad_enabled = False
    try:
        yield
    finally:
        _mode.grad_enabled = previous


@contextmanager
def detect_anomaly() -> Iterator[None]:
    """Raise NonFiniteError from the first op that produces NaN or Inf."""
    previous = is_anomaly_enabled()
    _mode.anomaly = True
    try:
        yield
    finally:
        _mode.anomaly = previous


class Tensor:
    """A float64 array that can take part in reverse-mode differentiation."""

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        """
        Create a leaf tensor.

        Args:
            data: Values to copy into the tensor
            requires_grad: Whether gradients should be accumulated into `grad`
            name: Optional label used in diagnostics
        """
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn, op: str) -> "Tensor":
        """
        Wrap the result of a primitive op.

        Args:
            data: The op's output values
            parents: Input tensors, in the order `backward` returns gradients
            backward: Maps the output gradient to one gradient (or None) per parent
            op: Op name recorded for diagnostics

        Returns:
            A tensor attached to the graph when any parent requires grad

        Raises:
            NonFiniteError: In anomaly mode, if `data` holds NaN or Inf
        """
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        if is_anomaly_enabled() and not np.all(np.isfinite(out.data)):
            raise NonFiniteError(f"op '{op}' produced non-finite values", source=op)
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out.grad = None
        out.name = None
        out.op = op
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def item(self) -> float:
        """Return the single value of a one-element tensor."""
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        """Return a constant tensor sharing no graph with this one."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        """Add `grad` into this tensor's gradient accumulator."""
        if grad.shape != self.data.shape:
            grad = np.broadcast_to(grad, self.data.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad += grad

    def backward(self, grad: Optional[ArrayLike] = None) -> "ComputationRecord":
        """
        Backpropagate from this tensor through every recorded op.

        Args:
            grad: Seed gradient; defaults to ones for a one-element tensor

        Returns:
            The ComputationRecord that was replayed
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward() needs an explicit seed for shape {self.shape}")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=np.float64)
        record = ComputationRecord.from_output(self)
        record.replay(self, seed)
        return record

    # Operator sugar; the differentiable rules live in engine.functional.

    def __add__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        from engine import functional as F
        return F.add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        from engine import functional as F
        return F.add(other, self)

    def __sub__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        from engine import functional as F
        return F.sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        from engine import functional as F
        return F.sub(other, self)

    def __mul__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        from engine import functional as F
        return F.mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        from engine import functional as F
        return F.mul(other, self)

    def __truediv__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        from engine import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        from engine import functional as F
        return F.div(other, self)

    def __neg__(self) -> "Tensor":
        from engine import functional as F
        return F.neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from engine import functional as F
        return F.matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        from engine import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        from engine import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        from engine import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad}{label})"


class ComputationRecord:
    """
    The ops executed to produce an output, in topological order.

    Replaying the record backwards visits each op exactly once and adds each
    gradient into its parent's accumulator, so a tensor consumed by several
    ops receives the sum of the path gradients.
    """

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "ComputationRecord":
        """Collect the graph below `output` with an iterative depth-first walk."""
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    @property
    def ops(self) -> List[Tensor]:
        """Non-leaf nodes, i.e. the executed primitive ops."""
        return [node for node in self.nodes if not node.is_leaf]

    def op_names(self) -> List[str]:
        return [node.op for node in self.ops]

    def __len__(self) -> int:
        return len(self.ops)

    def replay(self, output: Tensor, seed: np.ndarray) -> None:
        """Run every op's backward rule from `output` down to the leaves."""
        if not output.requires_grad:
            return
        output.accumulate_grad(seed)
        for node in reversed(self.nodes):
            if node.is_leaf or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, grad in zip(node._parents, grads):
                if grad is not None and parent.requires_grad:
                    parent.accumulate_grad(grad)
            # intermediate gradients are not kept once propagated
            if node is not output:
                node.grad = None
