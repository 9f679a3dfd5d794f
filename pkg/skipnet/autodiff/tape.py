"""Define-by-run tape and reverse-mode gradient propagation.

Every differentiable op is a ``Function`` instance that stores what its
backward needs (argmax indices, batch statistics, dropout masks) on itself.
Calling the function on nodes evaluates the forward kernel and appends an
entry to the tape, so entries are topologically ordered by construction.
"""

from abc import ABC, abstractmethod
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from skipnet.errors import NumericError, UsageError
from skipnet.tensor import Tensor, check_finite, freeze

# Negative-control switch: scales every returned gradient so checks must fail.
_gradient_fault: ContextVar[bool] = ContextVar("gradient_fault", default=False)


@contextmanager
def inject_gradient_fault() -> Iterator[None]:
    """Corrupt every gradient ``backward`` returns inside this block."""
    token = _gradient_fault.set(True)
    try:
        yield
    finally:
        _gradient_fault.reset(token)


@dataclass(eq=False)
class Node:
    """A value recorded on a tape."""

    id: int
    value: Tensor
    tape: "Tape"
    kind: str
    requires_grad: bool
    name: str | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.value.shape)


class Function(ABC):
    """A differentiable op: a forward kernel plus its vector-Jacobian product."""

    kind: ClassVar[str]
    needs_input_grad: tuple[bool, ...] = ()

    @abstractmethod
    def forward(self, *inputs: Tensor) -> Tensor:
        """Compute the output and keep whatever backward needs."""

    @abstractmethod
    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        """Gradients w.r.t. each input, None where ``needs_input_grad`` is False."""

    def __call__(self, *inputs: Node) -> Node:
        tape = inputs[0].tape
        if any(node.tape is not tape for node in inputs):
            raise UsageError(f"{self.kind}: inputs come from different tapes")
        self.needs_input_grad = tuple(node.requires_grad for node in inputs)
        value = self.forward(*(node.value for node in inputs))
        return tape.record(self, inputs, value)


@dataclass
class _Entry:
    node: Node
    fn: Function | None
    inputs: tuple[int, ...] = ()


def _leaf(value: Tensor) -> Tensor:
    """Read-only leaf value; writable caller arrays are copied, never frozen in place."""
    array = np.asarray(value)
    if array.flags.writeable or not array.flags.c_contiguous:
        array = np.array(array, copy=True, order="C")
    return freeze(array)


@dataclass
class Tape:
    """Ordered record of one forward pass.

    With ``recording=False`` no entries are kept, which is what inference uses.
    """

    recording: bool = True
    params: dict[str, Node] = field(default_factory=dict)
    _entries: list[_Entry] = field(default_factory=list)
    _next_id: int = 0

    def __len__(self) -> int:
        return len(self._entries)

    def _new_node(
        self, value: Tensor, kind: str, requires_grad: bool, name: str | None = None
    ) -> Node:
        node = Node(self._next_id, value, self, kind, requires_grad, name)
        self._next_id += 1
        return node

    def constant(self, value: Tensor) -> Node:
        """Leaf that never receives a gradient (inputs, labels, masks)."""
        node = self._new_node(_leaf(value), "constant", False)
        if self.recording:
            self._entries.append(_Entry(node, None))
        return node

    def param(self, name: str, value: Tensor) -> Node:
        """
        Register a named leaf whose gradient ``backward`` reports.

        Raises:
            UsageError: If the name is already registered on this tape
        """
        if name in self.params:
            raise UsageError(f"Parameter registered twice on one tape: {name}")
        node = self._new_node(_leaf(value), "param", True, name)
        self.params[name] = node
        if self.recording:
            self._entries.append(_Entry(node, None))
        return node

    def record(self, fn: Function, inputs: tuple[Node, ...], value: Tensor) -> Node:
        node = self._new_node(
            value, fn.kind, self.recording and any(n.requires_grad for n in inputs)
        )
        check_finite(value, f"{fn.kind} (node {node.id})")
        if self.recording:
            self._entries.append(_Entry(node, fn, tuple(n.id for n in inputs)))
        return node


def backward(tape: Tape, loss: Node) -> dict[str, Tensor]:
    """
    Propagate d(loss)/d(node) from ``loss`` back to every registered parameter.

    The tape is not modified, so calling this twice gives identical results.

    Args:
        tape: Tape the forward pass was recorded on
        loss: Scalar node

    Returns:
        Map parameter name -> gradient with the parameter's shape; parameters
        the loss does not depend on get exact zeros

    Raises:
        UsageError: If loss is not a scalar or the tape did not record
        NumericError: If a gradient becomes non-finite
    """
    if loss.tape is not tape:
        raise UsageError("loss node belongs to a different tape")
    if loss.value.ndim != 0:
        raise UsageError(f"loss must be a scalar, got shape {loss.shape}")
    if not tape.recording:
        raise UsageError("cannot differentiate a tape recorded with recording=False")

    grads: dict[int, Tensor] = {loss.id: np.ones_like(loss.value)}
    for entry in reversed(tape._entries):
        if entry.fn is None:
            continue
        grad = grads.pop(entry.node.id, None)
        if grad is None or not entry.node.requires_grad:
            continue
        for input_id, input_grad in zip(
            entry.inputs, entry.fn.backward(grad), strict=True
        ):
            if input_grad is None:
                continue
            if not np.all(np.isfinite(input_grad)):
                raise NumericError(
                    f"non-finite gradient from {entry.fn.kind} (node "
                    f"{entry.node.id}) into node {input_id}"
                )
            previous = grads.get(input_id)
            grads[input_id] = input_grad if previous is None else previous + input_grad

    scale = 1.5 if _gradient_fault.get() else 1.0
    result: dict[str, Tensor] = {}
    for name, node in tape.params.items():
        grad = grads.get(node.id)
        if grad is None:
            grad = np.zeros_like(node.value)
        result[name] = freeze(np.asarray(grad * scale, dtype=node.value.dtype))
    return result
