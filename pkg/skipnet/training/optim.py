"""Optimizers over named parameter maps.

``step`` takes the current parameters and their gradients and returns the
updated parameters; moment buffers live on the optimizer and are exported
through ``state_dict`` for checkpoints.
"""

from abc import ABC, abstractmethod
from collections.abc import Mapping
from typing import Any, ClassVar

import numpy as np
import numpy.typing as npt

from skipnet.errors import CheckpointShapeError, ConfigurationError, DimensionError
from skipnet.tensor import Tensor, freeze


class Optimizer(ABC):
    kind: ClassVar[str]

    def __init__(self, learning_rate: float):
        if learning_rate < 0:
            raise ConfigurationError(f"learning rate must be >= 0, got {learning_rate}")
        self.learning_rate = learning_rate
        self.steps = 0

    def step(
        self, params: Mapping[str, Tensor], grads: Mapping[str, Tensor]
    ) -> dict[str, Tensor]:
        """
        Apply one update.

        Raises:
            DimensionError: If a gradient is missing or its shape differs
        """
        for name, value in params.items():
            grad = grads.get(name)
            if grad is None:
                raise DimensionError(f"no gradient for parameter {name}")
            if grad.shape != value.shape:
                raise DimensionError(
                    f"{name}: gradient shape {grad.shape} does not match "
                    f"parameter shape {value.shape}"
                )
        self.steps += 1
        return {
            name: freeze(self._update(name, value, grads[name].astype(value.dtype)))
            for name, value in params.items()
        }

    @abstractmethod
    def _update(self, name: str, value: Tensor, grad: Tensor) -> Tensor: ...

    @abstractmethod
    def hyperparameters(self) -> dict[str, Any]:
        """Settings needed to rebuild this optimizer."""

    @abstractmethod
    def _buffers(self) -> dict[str, dict[str, Tensor]]: ...

    def state_dict(self) -> dict[str, npt.NDArray[Any]]:
        """Flat map: ``step`` plus ``<buffer>.<parameter>`` tensors, sorted by name."""
        state: dict[str, npt.NDArray[Any]] = {"step": np.asarray(self.steps, np.int64)}
        for buffer, values in self._buffers().items():
            for name in sorted(values):
                state[f"{buffer}.{name}"] = values[name]
        return state

    def load_state_dict(self, state: Mapping[str, npt.NDArray[Any]]) -> None:
        """
        Restore moment buffers and the step counter.

        Raises:
            CheckpointShapeError: If an entry does not belong to this optimizer
        """
        buffers = self._buffers()
        staged: list[tuple[dict[str, Tensor], str, Tensor]] = []
        steps = None
        for key, value in state.items():
            if key == "step":
                steps = int(value)
                continue
            buffer, _, name = key.partition(".")
            if buffer not in buffers or not name:
                raise CheckpointShapeError(
                    f"optimizer state entry {key} does not belong to {self.kind}"
                )
            staged.append((buffers[buffer], name, freeze(np.array(value))))
        if steps is None:
            raise CheckpointShapeError("optimizer state has no step counter")
        self.steps = steps
        for store, name, value in staged:
            store[name] = value


class Adam(Optimizer):
    """Adam with bias-corrected first and second moments."""

    kind = "adam"

    def __init__(
        self,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        super().__init__(learning_rate)
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: dict[str, Tensor] = {}
        self.v: dict[str, Tensor] = {}

    def _update(self, name: str, value: Tensor, grad: Tensor) -> Tensor:
        m = self.m.get(name, np.zeros_like(value))
        v = self.v.get(name, np.zeros_like(value))
        m = self.beta1 * m + (1 - self.beta1) * grad
        v = self.beta2 * v + (1 - self.beta2) * grad * grad
        self.m[name] = freeze(m.astype(value.dtype, copy=False))
        self.v[name] = freeze(v.astype(value.dtype, copy=False))
        m_hat = m / (1 - self.beta1**self.steps)
        v_hat = v / (1 - self.beta2**self.steps)
        update = self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
        return (value - update).astype(value.dtype, copy=False)

    def hyperparameters(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
        }

    def _buffers(self) -> dict[str, dict[str, Tensor]]:
        return {"m": self.m, "v": self.v}


class SGD(Optimizer):
    """Plain gradient descent with optional heavy-ball momentum."""

    kind = "sgd"

    def __init__(self, learning_rate: float = 1e-2, momentum: float = 0.0):
        super().__init__(learning_rate)
        if not 0 <= momentum < 1:
            raise ConfigurationError(f"momentum must be in [0, 1), got {momentum}")
        self.momentum = momentum
        self.velocity: dict[str, Tensor] = {}

    def _update(self, name: str, value: Tensor, grad: Tensor) -> Tensor:
        if self.momentum:
            velocity = self.momentum * self.velocity.get(name, np.zeros_like(value)) + grad
            self.velocity[name] = freeze(velocity.astype(value.dtype, copy=False))
            grad = velocity
        return (value - self.learning_rate * grad).astype(value.dtype, copy=False)

    def hyperparameters(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
        }

    def _buffers(self) -> dict[str, dict[str, Tensor]]:
        return {"velocity": self.velocity}


def make_optimizer(settings: Mapping[str, Any]) -> Optimizer:
    """
    Build an optimizer from ``hyperparameters()`` output or run-config values.

    Raises:
        ConfigurationError: For an unknown kind
    """
    options = dict(settings)
    kind = options.pop("kind", "adam")
    if kind == Adam.kind:
        return Adam(**options)
    if kind == SGD.kind:
        return SGD(**options)
    raise ConfigurationError(f"Unknown optimizer: {kind}")
