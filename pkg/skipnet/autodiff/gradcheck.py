"""Central finite-difference checks of tape gradients.

``check_gradients`` works on any function that records a scalar loss on a
fresh tape from a map of named leaf values; ``gradcheck`` wraps it for a
whole model with its cross-entropy loss.
"""

from collections.abc import Callable, Iterable, Mapping
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel

from skipnet.autodiff import ops
from skipnet.autodiff.tape import Node, Tape, backward
from skipnet.errors import UsageError
from skipnet.tensor import Precision, Tensor, get_precision

if TYPE_CHECKING:
    from skipnet.nn import Module

# Denominator floor of the relative error
RELATIVE_FLOOR = 1e-8

Evaluate = Callable[[Mapping[str, Tensor]], tuple[Tape, Node]]


class ParameterCheck(BaseModel):
    """Result for one parameter tensor."""

    name: str
    size: int
    checked: int
    max_relative_error: float


class GradCheckReport(BaseModel):
    """Outcome of a finite-difference check over several parameter tensors."""

    step: float
    threshold: float
    parameters: list[ParameterCheck]

    @property
    def max_relative_error(self) -> float:
        return max((p.max_relative_error for p in self.parameters), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.threshold

    def failing(self) -> list[ParameterCheck]:
        return [p for p in self.parameters if p.max_relative_error >= self.threshold]


def relative_error(
    analytic: npt.ArrayLike, numeric: npt.ArrayLike
) -> npt.NDArray[np.float64]:
    """|a - n| / max(|a|, |n|, 1e-8), elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), RELATIVE_FLOOR)
    return np.abs(a - n) / scale


def _require_float64(values: Mapping[str, Tensor]) -> None:
    if get_precision() is not Precision.FLOAT64:
        raise UsageError("gradient checks must run inside precision('float64')")
    for name, value in values.items():
        if value.dtype != np.float64:
            raise UsageError(
                f"gradient check needs float64 values, {name} is {value.dtype}"
            )


def check_gradients(
    evaluate: Evaluate,
    values: Mapping[str, Tensor],
    *,
    step: float = 1e-5,
    threshold: float = 1e-4,
    samples: int = 64,
    seed: int = 0,
    names: Iterable[str] | None = None,
) -> GradCheckReport:
    """
    Compare tape gradients with central differences (f(v+h) - f(v-h)) / 2h.

    Args:
        evaluate: Records the loss on a new tape from a full value map; must
            register every entry of ``values`` with ``tape.param`` under its key
        values: Leaf values at which gradients are checked
        step: Perturbation h
        threshold: Pass if every relative error is below this
        samples: Scalars checked per tensor, drawn without replacement
        seed: Seed for the sampled positions
        names: Restrict the check to these keys (default: all)

    Returns:
        Report with the max relative error per checked tensor

    Raises:
        UsageError: Outside float64 mode or for float32 values
    """
    _require_float64(values)
    tape, loss = evaluate(values)
    analytic = backward(tape, loss)
    rng = np.random.default_rng(seed)

    checks = []
    for name in list(names) if names is not None else list(values):
        value = values[name]
        count = min(samples, value.size)
        positions = np.sort(rng.choice(value.size, size=count, replace=False))
        numeric = np.empty(count)
        for k, position in enumerate(positions):
            losses = []
            for sign in (1.0, -1.0):
                shifted = value.copy()
                shifted.flat[position] += sign * step
                _, shifted_loss = evaluate({**values, name: shifted})
                losses.append(float(shifted_loss.value))
            numeric[k] = (losses[0] - losses[1]) / (2 * step)
        errors = relative_error(analytic[name].flat[positions], numeric)
        checks.append(
            ParameterCheck(
                name=name,
                size=value.size,
                checked=count,
                max_relative_error=float(errors.max(initial=0.0)),
            )
        )
    return GradCheckReport(step=step, threshold=threshold, parameters=checks)


def gradcheck(
    model: "Module",
    x: Tensor,
    labels: npt.ArrayLike,
    step: float = 1e-5,
    *,
    threshold: float = 1e-4,
    samples: int = 64,
    seed: int = 0,
) -> GradCheckReport:
    """
    Check every parameter gradient of ``model`` under its cross-entropy loss.

    Batch norm runs in train mode (gradients flow through the batch
    statistics) and dropout masks are frozen so the loss is deterministic.
    Parameters and running statistics are restored afterwards.

    Raises:
        UsageError: Outside float64 mode or if the model was not cast to float64
    """
    params = dict(model.named_parameters())
    _require_float64({**params, "input": x})
    targets = np.asarray(labels, dtype=np.int64)
    snapshot = model.state_dict()
    was_training = model.training

    def evaluate(values: Mapping[str, Tensor]) -> tuple[Tape, Node]:
        model.assign_parameters(values)
        tape = Tape()
        logits = model(tape, tape.constant(x))
        return tape, ops.sparse_cross_entropy(logits, targets)

    model.train()
    try:
        with model.frozen_dropout():
            return check_gradients(
                evaluate,
                params,
                step=step,
                threshold=threshold,
                samples=samples,
                seed=seed,
            )
    finally:
        model.load_state_dict(snapshot)
        model.train(was_training)
