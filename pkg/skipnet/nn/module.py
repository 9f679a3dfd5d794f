"""Module base class: named parameters, buffers, children and mode.

Parameters are the tensors the optimizer updates; buffers are persistent
state that is not trained (batch-norm running statistics). Both are stored
as read-only arrays and replaced wholesale, never written in place.

Qualified names join the registration path with dots, e.g.
``block1.attention.reduce.weight``. The same names key tape parameters,
gradient maps, optimizer state and checkpoint entries.
"""

from collections.abc import Iterator, Mapping
from contextlib import contextmanager
from typing import Any, Self, TypeVar

import numpy as np
import numpy.typing as npt

from skipnet.autodiff import Node, Tape
from skipnet.errors import DimensionError, UsageError
from skipnet.tensor import Tensor, as_tensor, freeze

M = TypeVar("M", bound="Module")


class Module:
    """Base class for every layer and model."""

    def __init__(self) -> None:
        self.training = True
        self.path = ""
        self._parameters: dict[str, Tensor] = {}
        self._buffers: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}

    def forward(self, tape: Tape, x: Node) -> Any:
        raise NotImplementedError

    def __call__(self, tape: Tape, x: Node) -> Any:
        return self.forward(tape, x)

    # Registration

    def add_module(self, name: str, module: M) -> M:
        if name in self._children:
            raise UsageError(f"Submodule registered twice: {self.qualify(name)}")
        self._children[name] = module
        module._set_path(self.qualify(name))
        return module

    def add_parameter(self, name: str, value: npt.ArrayLike) -> None:
        self._parameters[name] = as_tensor(value)

    def add_buffer(self, name: str, value: npt.ArrayLike) -> None:
        self._buffers[name] = as_tensor(value)

    def _set_path(self, path: str) -> None:
        self.path = path
        for name, child in self._children.items():
            child._set_path(self.qualify(name))

    def qualify(self, local: str) -> str:
        return f"{self.path}.{local}" if self.path else local

    # Access

    def parameter(self, name: str) -> Tensor:
        return self._parameters[name]

    def buffer(self, name: str) -> Tensor:
        return self._buffers[name]

    def param_node(self, tape: Tape, name: str) -> Node:
        """Register a parameter on ``tape`` under its qualified name."""
        return tape.param(self.qualify(name), self._parameters[name])

    def set_parameter(self, name: str, value: npt.ArrayLike) -> None:
        self._parameters[name] = self._checked(name, self._parameters[name], value)

    def set_buffer(self, name: str, value: npt.ArrayLike) -> None:
        self._buffers[name] = self._checked(name, self._buffers[name], value)

    def _checked(self, name: str, current: Tensor, value: npt.ArrayLike) -> Tensor:
        array = np.asarray(value)
        if array.shape != current.shape:
            raise DimensionError(
                f"{self.qualify(name)}: shape {array.shape} does not match "
                f"{current.shape}"
            )
        return freeze(array.astype(current.dtype, copy=True))

    def children(self) -> Iterator[tuple[str, "Module"]]:
        yield from self._children.items()

    def modules(self) -> Iterator["Module"]:
        """This module and all descendants, parents before children."""
        yield self
        for child in self._children.values():
            yield from child.modules()

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for module in self.modules():
            for name, value in module._parameters.items():
                yield module.qualify(name), value

    def named_buffers(self) -> Iterator[tuple[str, Tensor]]:
        for module in self.modules():
            for name, value in module._buffers.items():
                yield module.qualify(name), value

    def _slots(self) -> dict[str, tuple["Module", str, bool]]:
        """Qualified name -> (owner, local name, is_parameter)."""
        slots: dict[str, tuple[Module, str, bool]] = {}
        for module in self.modules():
            for name in module._parameters:
                slots[module.qualify(name)] = (module, name, True)
            for name in module._buffers:
                slots[module.qualify(name)] = (module, name, False)
        return slots

    # State

    def state_dict(self) -> dict[str, Tensor]:
        """Parameters then buffers of each module, in registration order."""
        state: dict[str, Tensor] = {}
        for module in self.modules():
            for name, value in module._parameters.items():
                state[module.qualify(name)] = value
            for name, value in module._buffers.items():
                state[module.qualify(name)] = value
        return state

    def load_state_dict(self, state: Mapping[str, npt.ArrayLike]) -> None:
        """
        Replace every parameter and buffer.

        All entries are validated before anything is assigned, so a failed
        load leaves the module untouched.

        Raises:
            DimensionError: On a missing or unexpected key or a shape mismatch
        """
        slots = self._slots()
        missing = sorted(set(slots) - set(state))
        unexpected = sorted(set(state) - set(slots))
        if missing or unexpected:
            raise DimensionError(
                f"State mismatch: missing {missing or 'none'}, "
                f"unexpected {unexpected or 'none'}"
            )
        self._assign(slots, state)

    def assign_parameters(self, values: Mapping[str, npt.ArrayLike]) -> None:
        """Replace a subset of parameters by qualified name, all-or-nothing."""
        slots = {k: v for k, v in self._slots().items() if v[2]}
        unknown = sorted(set(values) - set(slots))
        if unknown:
            raise DimensionError(f"Unknown parameters: {unknown}")
        self._assign(slots, values)

    def _assign(
        self,
        slots: Mapping[str, tuple["Module", str, bool]],
        values: Mapping[str, npt.ArrayLike],
    ) -> None:
        staged = []
        for key, value in values.items():
            module, name, is_param = slots[key]
            store = module._parameters if is_param else module._buffers
            staged.append((store, name, module._checked(name, store[name], value)))
        for store, name, tensor in staged:
            store[name] = tensor

    def astype(self, dtype: npt.DTypeLike) -> Self:
        """Cast every parameter and buffer in place; returns self."""
        for module in self.modules():
            for store in (module._parameters, module._buffers):
                for name, value in store.items():
                    store[name] = freeze(value.astype(dtype))
        return self

    # Mode

    def train(self, mode: bool = True) -> Self:
        """Switch the whole tree to train (or eval) mode before any forward."""
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> Self:
        return self.train(False)

    @contextmanager
    def frozen_dropout(self) -> Iterator[None]:
        """Reuse one fixed mask per dropout layer for the duration of the block."""
        modules = list(self.modules())
        for module in modules:
            module.freeze_mask()
        try:
            yield
        finally:
            for module in modules:
                module.release_mask()

    def freeze_mask(self) -> None:
        """Hook for stochastic layers; see ``frozen_dropout``."""

    def release_mask(self) -> None:
        """Hook for stochastic layers; see ``frozen_dropout``."""

    # Size

    def parameter_counts(self) -> dict[str, int]:
        """Scalar parameter count per module that owns parameters."""
        return {
            module.path or type(module).__name__: sum(
                v.size for v in module._parameters.values()
            )
            for module in self.modules()
            if module._parameters
        }

    def num_parameters(self) -> int:
        return sum(value.size for _, value in self.named_parameters())
