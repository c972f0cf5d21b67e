"""Configuration model for the episodic training loop."""

from typing import Any, Self

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.spanproto.domain.model_config import DecodeConfig, MarginConfig, OptimizerConfig


class TrainConfig(BaseModel):
    """Hyperparameters of the two-phase training procedure.

    The span extractor trains alone for the first ``pretrain_steps``
    steps (λ = 0), then extractor and classifier train jointly (λ = 1).
    ``optimizer.total_steps`` always mirrors ``total_steps``.
    """

    model_config = ConfigDict(frozen=True)

    total_steps: int = Field(default=2000, ge=1, description="T")
    pretrain_steps: int = Field(default=200, ge=0, description="T′")
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    decode: DecodeConfig = Field(default_factory=DecodeConfig)
    margin: MarginConfig = Field(default_factory=MarginConfig)
    seed: int = 42
    checkpoint_every: int = Field(default=500, ge=1)
    episodes_per_step: int = Field(
        default=1,
        ge=1,
        description="Episodes sampled and averaged per optimizer step",
    )
    log_every: int = Field(default=100, ge=1)
    word_dropout: float = Field(
        default=0.2,
        ge=0.0,
        lt=1.0,
        description="Share of an episode's distinct words replaced by unseen ones each step",
    )

    @model_validator(mode="before")
    @classmethod
    def sync_optimizer_steps(cls, data: Any) -> Any:
        """Copy ``total_steps`` into the optimizer schedule."""
        if not isinstance(data, dict):
            return data
        total = data.get("total_steps", cls.model_fields["total_steps"].default)
        optimizer = data.get("optimizer")
        if isinstance(optimizer, OptimizerConfig):
            optimizer = optimizer.model_dump()
        return {**data, "optimizer": {**(optimizer or {}), "total_steps": total}}

    @model_validator(mode="after")
    def pretrain_before_total(self) -> Self:
        """Enforce T′ < T."""
        if self.pretrain_steps >= self.total_steps:
            raise ValueError(
                f"pretrain_steps ({self.pretrain_steps}) must be smaller than "
                f"total_steps ({self.total_steps})"
            )
        return self

    def lambda_at(self, step: int) -> float:
        """Classifier loss weight at 1-based ``step``: 0 before T′, 1 after."""
        return 0.0 if step < self.pretrain_steps else 1.0
