"""Configuration models for the encoder, optimizer, span decoder and classifier.

Defaults follow the published SpanProto setup where it transfers to a
desk-scale model: confidence threshold 0.8, margin 3.0, warmup rate 0.1,
max sequence length 128.
"""

from typing import Literal

import torch
from pydantic import BaseModel, ConfigDict, Field

from src.spanproto.domain.vocabulary import Vocabulary


class EncoderConfig(BaseModel):
    """Shape and vocabulary of the token encoder."""

    model_config = ConfigDict(frozen=True)

    embedding_dim: int = Field(default=64, ge=2, description="Embedding size h")
    max_length: int = Field(default=128, ge=1, description="Longest accepted sentence")
    mixing_layers: int = Field(
        default=1,
        ge=0,
        le=8,
        description="Number of self-attention mixing blocks",
    )
    vocabulary: Vocabulary = Field(default_factory=Vocabulary)
    min_token_count: int = Field(
        default=2,
        ge=1,
        description="Training tokens rarer than this share the unknown buckets",
    )
    output_norm: float | None = Field(
        default=1.5,
        gt=0.0,
        description="Norm of every output row; None leaves rows unscaled",
    )
    dtype: Literal["float32", "float64"] = "float32"

    @property
    def torch_dtype(self) -> torch.dtype:
        """The torch dtype matching ``dtype``."""
        return torch.float64 if self.dtype == "float64" else torch.float32


class OptimizerConfig(BaseModel):
    """AdamW hyperparameters and warmup schedule."""

    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(default=1e-3, gt=0)
    warmup_fraction: float = Field(default=0.1, ge=0.0, le=1.0)
    total_steps: int = Field(default=2000, ge=1, description="T")
    weight_decay: float = Field(default=0.01, ge=0.0)

    @property
    def warmup_steps(self) -> int:
        """Number of steps over which the learning rate ramps up from 0."""
        return round(self.warmup_fraction * self.total_steps)


class DecodeConfig(BaseModel):
    """Span decoding threshold on the probability scale."""

    model_config = ConfigDict(frozen=True)

    threshold: float = Field(default=0.8, gt=0.0, lt=1.0, description="θ")


class MarginConfig(BaseModel):
    """Margin used both by the margin loss and as the rejection radius."""

    model_config = ConfigDict(frozen=True)

    radius: float = Field(default=3.0, gt=0.0, description="r")
    margin_loss: bool = Field(default=True, description="Enable the margin objective")
