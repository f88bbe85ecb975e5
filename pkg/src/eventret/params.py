"""Named learnable tensors with matching gradient slots."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator, Mapping

import numpy as np
import torch


class ParameterStore:
    """Ordered mapping of unique names to leaf tensors.

    Every tensor carries an allocated ``.grad`` of identical shape, so a
    parameter that a loss never touched reads back a zero gradient.
    """

    def __init__(self, dtype: torch.dtype = torch.float32):
        self.dtype = dtype
        self._tensors: OrderedDict[str, torch.Tensor] = OrderedDict()

    def add(self, name: str, value: torch.Tensor | np.ndarray) -> torch.Tensor:
        if name in self._tensors:
            raise KeyError(f"duplicate parameter name: {name}")
        t = torch.as_tensor(value).detach().to(self.dtype).clone().requires_grad_(True)
        t.grad = torch.zeros_like(t)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> torch.Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._tensors if n.startswith(prefix)]

    def numel(self) -> int:
        return sum(t.numel() for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            if t.grad is None:
                t.grad = torch.zeros_like(t)
            else:
                t.grad.zero_()

    def grad(self, name: str) -> torch.Tensor:
        return self._tensors[name].grad

    def to(self, dtype: torch.dtype) -> "ParameterStore":
        out = ParameterStore(dtype)
        for name, t in self._tensors.items():
            out.add(name, t.detach())
        return out

    def copy(self) -> "ParameterStore":
        return self.to(self.dtype)

    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, t.detach().cpu().numpy().copy()) for n, t in self._tensors.items())

    @classmethod
    def from_state(cls, state: Mapping[str, np.ndarray], dtype: torch.dtype = torch.float32) -> "ParameterStore":
        store = cls(dtype)
        for name, arr in state.items():
            store.add(name, torch.from_numpy(np.array(arr)))
        return store

    def equal(self, other: "ParameterStore") -> bool:
        if list(self._tensors) != list(other._tensors):
            return False
        return all(torch.equal(self[n], other[n]) for n in self._tensors)


def backward(loss: torch.Tensor, store: ParameterStore | None = None) -> None:
    """Accumulate d(loss)/d(theta) into every parameter's gradient slot."""
    if not isinstance(loss, torch.Tensor) or loss.grad_fn is None:
        if not (isinstance(loss, torch.Tensor) and loss.requires_grad and loss.is_leaf):
            raise RuntimeError("no recorded computation")
    if loss.numel() != 1:
        raise ValueError("loss must be a scalar")
    loss.backward()
    if store is not None:
        for t in store._tensors.values():
            if t.grad is None:
                t.grad = torch.zeros_like(t)
