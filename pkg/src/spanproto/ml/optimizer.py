"""AdamW with linear warmup to a constant learning rate."""

import logging

import torch
from transformers import get_constant_schedule_with_warmup

from src.spanproto.domain.model_config import OptimizerConfig

logger = logging.getLogger(__name__)


class OptimizerError(Exception):
    """Base error for optimizer steps."""


class NonFiniteGradientError(OptimizerError):
    """Raised when a gradient holds NaN or infinity."""

    def __init__(self, parameter_name: str) -> None:
        super().__init__(f"non-finite gradient in parameter {parameter_name!r}")
        self.parameter_name = parameter_name


class WarmupAdamW:
    """Decoupled-weight-decay Adam whose rate ramps from 0 over the warmup steps.

    The learning rate applied at step index ``s`` is
    ``lr * min(1, s / warmup_steps)``; ``s`` is passed explicitly so the
    schedule does not depend on how many times ``step`` was called.
    """

    def __init__(self, model: torch.nn.Module, config: OptimizerConfig) -> None:
        self._model = model
        self._config = config
        self._optimizer = torch.optim.AdamW(
            model.parameters(),
            lr=config.learning_rate,
            weight_decay=config.weight_decay,
        )
        self._schedule = get_constant_schedule_with_warmup(
            self._optimizer,
            num_warmup_steps=config.warmup_steps,
        )

    @property
    def config(self) -> OptimizerConfig:
        return self._config

    def learning_rate_at(self, step_index: int) -> float:
        """Effective learning rate at ``step_index``."""
        return self._config.learning_rate * self._schedule.lr_lambdas[0](step_index)

    def zero_grad(self) -> None:
        self._optimizer.zero_grad(set_to_none=True)

    def check_gradients(self) -> None:
        """Raise on the first parameter with a non-finite gradient."""
        for name, parameter in self._model.named_parameters():
            if parameter.grad is not None and not torch.isfinite(parameter.grad).all():
                raise NonFiniteGradientError(name)

    def step(self, step_index: int) -> float:
        """Apply one update in place and return the learning rate used.

        Raises:
            NonFiniteGradientError: If any gradient is NaN or infinite;
                parameters are left untouched.
        """
        self.check_gradients()
        rate = self.learning_rate_at(step_index)
        for group in self._optimizer.param_groups:
            group["lr"] = rate
        self._optimizer.step()
        return rate
