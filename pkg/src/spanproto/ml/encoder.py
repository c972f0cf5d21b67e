"""Trainable token encoder producing contextual embeddings.

Token embeddings plus a scaled sinusoidal position signal, followed by
``mixing_layers`` single-head pre-norm self-attention blocks. The output
row ``H[i]`` is the contextual embedding of token ``i``. Rows are rescaled
to a fixed norm so span distances live on the same scale as the margin.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from src.spanproto.domain.episode import LabeledSentence
from src.spanproto.domain.model_config import EncoderConfig

logger = logging.getLogger(__name__)


class EncoderError(Exception):
    """Base error for encoding failures."""


class SequenceTooLongError(EncoderError):
    """Raised when a sentence exceeds the configured max length."""


class EmptySentenceError(EncoderError):
    """Raised when asked to encode zero tokens."""


@dataclass(frozen=True)
class EncodedSentence:
    """Contextual embeddings H (L x h) of one sentence."""

    hidden: torch.Tensor

    @property
    def length(self) -> int:
        """Token count L."""
        return self.hidden.shape[0]

    @property
    def dim(self) -> int:
        """Embedding size h."""
        return self.hidden.shape[1]


def sinusoidal_positions(max_length: int, dim: int) -> torch.Tensor:
    """Fixed sine/cosine position table of shape ``(max_length, dim)``."""
    position = torch.arange(max_length, dtype=torch.float64).unsqueeze(1)
    rates = torch.exp(
        torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim)
    )
    table = torch.zeros(max_length, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * rates)
    table[:, 1::2] = torch.cos(position * rates[: dim // 2])
    return table


class TokenEncoder(nn.Module):
    """Embedding + position signal + self-attention mixing blocks."""

    def __init__(self, config: EncoderConfig) -> None:
        super().__init__()
        dim = config.embedding_dim
        self.config = config
        self.embedding = nn.Embedding(config.vocabulary.size, dim)
        nn.init.normal_(self.embedding.weight, std=dim**-0.5)
        self.register_buffer(
            "positions",
            sinusoidal_positions(config.max_length, dim) * dim**-0.5,
            persistent=False,
        )
        self.mixing = nn.ModuleList(
            nn.TransformerEncoderLayer(
                d_model=dim,
                nhead=1,
                dim_feedforward=2 * dim,
                dropout=0.0,
                batch_first=True,
                norm_first=True,
            )
            for _ in range(config.mixing_layers)
        )

    def forward(self, token_ids: torch.Tensor) -> torch.Tensor:
        """Map ``(L,)`` token ids to ``(L, h)`` embeddings."""
        length = token_ids.shape[0]
        hidden = self.embedding(token_ids) + self.positions[:length].to(
            self.embedding.weight.dtype
        )
        hidden = hidden.unsqueeze(0)
        for block in self.mixing:
            hidden = block(hidden)
        hidden = hidden.squeeze(0)
        if self.config.output_norm is not None:
            # every row lies on the sphere of radius output_norm
            hidden = F.normalize(hidden, dim=-1) * self.config.output_norm
        return hidden

    def token_ids(self, tokens: Sequence[str]) -> torch.Tensor:
        """Look up embedding rows for ``tokens``."""
        return torch.tensor(
            self.config.vocabulary.encode(tokens),
            dtype=torch.long,
            device=self.embedding.weight.device,
        )


def encode(sentence: LabeledSentence | Sequence[str], encoder: TokenEncoder) -> EncodedSentence:
    """Encode a sentence into contextual embeddings.

    Args:
        sentence: A labeled sentence or a bare token sequence.
        encoder: The token encoder holding the parameters.

    Returns:
        EncodedSentence whose hidden matrix participates in autograd.

    Raises:
        EmptySentenceError: If there are no tokens.
        SequenceTooLongError: If the sentence exceeds ``max_length``.
    """
    tokens = sentence.tokens if isinstance(sentence, LabeledSentence) else tuple(sentence)
    if not tokens:
        raise EmptySentenceError("cannot encode an empty token list")
    if len(tokens) > encoder.config.max_length:
        raise SequenceTooLongError(
            f"sentence has {len(tokens)} tokens, max length is {encoder.config.max_length}"
        )
    return EncodedSentence(hidden=encoder(encoder.token_ids(tokens)))
