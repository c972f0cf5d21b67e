"""JSON checkpoint files for SpanProtoModel.

A checkpoint is self-describing::

    {"format": "spanproto-checkpoint", "version": 1,
     "encoder_config": {...EncoderConfig incl. vocabulary...},
     "step": 2000,
     "parameters": {"encoder.embedding.weight": {"shape": [V, h], "values": [...]}, ...}}

Values are row-major. Floats are written with full ``repr`` precision so
a save/load cycle restores every parameter exactly.
"""

import json
import logging
import math
from pathlib import Path

import torch
from pydantic import BaseModel, Field, ValidationError

from src.spanproto.domain.model_config import EncoderConfig
from src.spanproto.ml.model import SpanProtoModel
from src.spanproto.utils.atomic_file import write_text_atomic

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "spanproto-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    """Raised when a checkpoint cannot be read or written."""


class CheckpointShapeError(CheckpointError):
    """Raised when stored tensors do not match the model built from the stored config."""


class StoredTensor(BaseModel):
    shape: list[int]
    values: list[float]


class CheckpointFile(BaseModel):
    """On-disk checkpoint schema."""

    format: str = CHECKPOINT_FORMAT
    version: int = CHECKPOINT_VERSION
    encoder_config: EncoderConfig
    step: int | None = Field(default=None, ge=0)
    parameters: dict[str, StoredTensor]


def snapshot(model: SpanProtoModel, step: int | None = None) -> CheckpointFile:
    """Copy the current parameters into a checkpoint object."""
    parameters = {
        name: StoredTensor(
            shape=list(tensor.shape),
            values=tensor.detach().to(torch.float64).reshape(-1).tolist(),
        )
        for name, tensor in model.named_parameters()
    }
    return CheckpointFile(encoder_config=model.config, step=step, parameters=parameters)


def save_checkpoint(model: SpanProtoModel, path: Path | str, step: int | None = None) -> Path:
    """Write the model's parameters atomically.

    Returns:
        The path written.

    Raises:
        CheckpointError: If the file cannot be written.
    """
    path = Path(path)
    content = snapshot(model, step).model_dump_json()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_text_atomic(path, content, prefix=".ckpt_")
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc
    logger.info("Saved checkpoint %s", path)
    return path


def restore(checkpoint: CheckpointFile) -> SpanProtoModel:
    """Build a model from a checkpoint object.

    Raises:
        CheckpointError: On an unknown format or version.
        CheckpointShapeError: If names or shapes disagree with the model.
    """
    if checkpoint.format != CHECKPOINT_FORMAT or checkpoint.version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint {checkpoint.format!r} v{checkpoint.version}"
        )
    model = SpanProtoModel(checkpoint.encoder_config)
    expected = model.parameter_shapes()
    missing = sorted(set(expected) - set(checkpoint.parameters))
    unexpected = sorted(set(checkpoint.parameters) - set(expected))
    if missing or unexpected:
        raise CheckpointShapeError(f"missing {missing}, unexpected {unexpected}")

    state = {}
    for name, shape in expected.items():
        stored = checkpoint.parameters[name]
        if tuple(stored.shape) != shape:
            raise CheckpointShapeError(
                f"{name}: stored shape {tuple(stored.shape)} != model shape {shape}"
            )
        if len(stored.values) != math.prod(shape):
            raise CheckpointShapeError(
                f"{name}: {len(stored.values)} values for shape {shape}"
            )
        state[name] = torch.tensor(stored.values, dtype=torch.float64).reshape(shape)
    with torch.no_grad():
        for name, parameter in model.named_parameters():
            parameter.copy_(state[name])
    return model


def load_checkpoint(path: Path | str) -> SpanProtoModel:
    """Read a checkpoint file and rebuild the model.

    Raises:
        FileNotFoundError: If the file doesn't exist.
        CheckpointError: If the file is not a valid checkpoint.
        CheckpointShapeError: If stored shapes don't match the model.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"corrupted checkpoint {path}: not UTF-8 text") from exc
    try:
        checkpoint = CheckpointFile.model_validate_json(raw)
    except ValidationError as exc:
        raise CheckpointError(f"corrupted checkpoint {path}: {exc.errors()[0]['msg']}") from exc
    model = restore(checkpoint)
    logger.info("Loaded checkpoint %s (step %s)", path, checkpoint.step)
    return model
