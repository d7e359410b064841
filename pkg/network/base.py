"""
Base module interface for the network.

Modules own parameters (Tensors with requires_grad), buffers (batch-norm
running statistics and fixed constants) and child modules. Parameter and
buffer names are hierarchical paths such as `stage.2/block.0/msm/gconv.W`:
child modules are joined with '/', list items with '.', and the leaf name
with '.'.
"""

import abc
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from engine import BatchNormState, Tensor


class Module(abc.ABC):
    """Base class for network modules."""

    _item_separator = "/"

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)
        object.__setattr__(self, "rng", None)

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Module):
            self._children[name] = value
        elif isinstance(value, Tensor) and value.requires_grad:
            value.name = name
            self._params[name] = value
        elif isinstance(value, BatchNormState):
            self._buffers[name] = value
        object.__setattr__(self, name, value)

    @abc.abstractmethod
    def forward(self, *args, **kwargs):
        """
        Run the module.

        Returns:
            The module output, usually a Tensor
        """
        pass

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def parameter(self, name: str, data: np.ndarray) -> Tensor:
        """Register `data` as a trainable parameter called `name`."""
        tensor = Tensor(data, requires_grad=True, name=name)
        setattr(self, name, tensor)
        return tensor

    def register_constant(self, name: str, data: np.ndarray) -> None:
        """Register a fixed, non-trainable array stored with the checkpoint."""
        self._buffers[name] = data
        object.__setattr__(self, name, data)

    def _child_prefix(self, prefix: str, name: str) -> str:
        if not prefix:
            return name
        return f"{prefix}{self._item_separator}{name}"

    def named_children(self) -> Iterator[Tuple[str, "Module"]]:
        return iter(self._children.items())

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._children.items():
            yield from child.named_modules(self._child_prefix(prefix, name))

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, param in self._params.items():
            yield (f"{prefix}.{name}" if prefix else name), param
        for name, child in self._children.items():
            yield from child.named_parameters(self._child_prefix(prefix, name))

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, Any]]:
        for name, buf in self._buffers.items():
            yield (f"{prefix}.{name}" if prefix else name), buf
        for name, child in self._children.items():
            yield from child.named_buffers(self._child_prefix(prefix, name))

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def set_rng(self, rng: Optional[np.random.Generator]) -> None:
        """Hand a random generator to every submodule (used by dropout)."""
        for _, module in self.named_modules():
            object.__setattr__(module, "rng", rng)

    def batch_norm_states(self) -> Dict[str, BatchNormState]:
        return {name: buf for name, buf in self.named_buffers() if isinstance(buf, BatchNormState)}


class ModuleList(Module):
    """An indexed sequence of modules named `<list>.<index>`."""

    _item_separator = "."

    def __init__(self, modules=()):
        super().__init__()
        self._items: List[Module] = []
        for module in modules:
            self.append(module)

    def append(self, module: Module) -> None:
        self._children[str(len(self._items))] = module
        self._items.append(module)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def forward(self, x):
        for module in self._items:
            x = module(x)
        return x
