"""Save and restore a model (and optionally its optimizer) as one checkpoint file."""

import logging
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from skipnet.checkpoint.format import CheckpointData, decode, encode
from skipnet.data import SplitProvenance
from skipnet.errors import (
    CheckpointError,
    CheckpointShapeError,
    ConfigurationError,
    DimensionError,
)
from skipnet.model import ModelConfig, SKIPNetModel
from skipnet.storage import ArtifactStore
from skipnet.training.optim import Optimizer, make_optimizer

logger = logging.getLogger(__name__)

OPTIMIZER_PREFIX = "optimizer."


def save(
    model: SKIPNetModel,
    optimizer: Optimizer | None,
    path: Path,
    split: SplitProvenance | None = None,
) -> Path:
    """
    Write ``model`` (and ``optimizer`` state, if given) to ``path`` atomically.

    ``split`` records how the training data was split, so later evaluation
    can rebuild the same split.

    Raises:
        CheckpointError: If the file cannot be written
    """
    path = Path(path)
    config: dict[str, Any] = {
        "model": model.config.model_dump(mode="json"),
        "optimizer": optimizer.hyperparameters() if optimizer else None,
        "split": split.model_dump(mode="json") if split else None,
    }
    tensors = dict(model.state_dict())
    if optimizer is not None:
        for key, value in optimizer.state_dict().items():
            tensors[OPTIMIZER_PREFIX + key] = value
    data = encode(config, tensors)
    try:
        ArtifactStore(path.parent).save(path.name, data)
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint {path}: {e}") from e
    logger.info(f"Saved checkpoint {path} ({len(tensors)} tensors, {len(data)} bytes)")
    return path


def _read(path: Path) -> CheckpointData:
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    return decode(data, str(path))


def load_split_provenance(path: Path) -> SplitProvenance | None:
    """
    The training split recorded in a checkpoint, or None if it has none.

    Raises:
        CheckpointError: If the file cannot be read or verified
        CheckpointShapeError: If the recorded split is malformed
    """
    path = Path(path)
    recorded = _read(path).config.get("split")
    if recorded is None:
        return None
    try:
        return SplitProvenance.model_validate(recorded)
    except ValidationError as e:
        raise CheckpointShapeError(f"{path}: invalid split record: {e}") from e


def load(path: Path) -> tuple[SKIPNetModel, Optimizer | None]:
    """
    Rebuild the model in eval mode, plus its optimizer when one was saved.

    Nothing is constructed until the whole file has been verified.

    Raises:
        CheckpointError: If the file cannot be read, or one of its subclasses
            for a bad magic, version, CRC or shape
    """
    path = Path(path)
    checkpoint = _read(path)

    try:
        model_config = ModelConfig.model_validate(checkpoint.config.get("model"))
    except ValidationError as e:
        raise CheckpointShapeError(f"{path}: invalid model config: {e}") from e

    model_state = {
        k: v for k, v in checkpoint.tensors.items() if not k.startswith(OPTIMIZER_PREFIX)
    }
    optimizer_state = {
        k.removeprefix(OPTIMIZER_PREFIX): v
        for k, v in checkpoint.tensors.items()
        if k.startswith(OPTIMIZER_PREFIX)
    }

    try:
        model = SKIPNetModel(model_config)
    except ConfigurationError as e:
        raise CheckpointShapeError(f"{path}: {e}") from e
    floats = {v.dtype for v in model_state.values() if np.issubdtype(v.dtype, np.floating)}
    if len(floats) > 1:
        raise CheckpointShapeError(f"{path}: mixed parameter dtypes {sorted(map(str, floats))}")
    if floats:
        model.astype(floats.pop())
    try:
        model.load_state_dict(model_state)
    except DimensionError as e:
        raise CheckpointShapeError(f"{path}: {e}") from e

    optimizer = None
    settings = checkpoint.config.get("optimizer")
    if settings is not None:
        try:
            optimizer = make_optimizer(settings)
        except (ConfigurationError, TypeError) as e:
            raise CheckpointShapeError(f"{path}: invalid optimizer settings: {e}") from e
        optimizer.load_state_dict(optimizer_state)
    elif optimizer_state:
        raise CheckpointShapeError(f"{path}: optimizer state without optimizer settings")

    logger.info(f"Loaded checkpoint {path}")
    return model.eval(), optimizer
