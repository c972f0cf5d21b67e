"""The SpanProto model: one shared encoder feeding the span scorer and the classifier.

The module's ``named_parameters()`` is the parameter registry of the
whole system: names are unique and every gradient lives in ``.grad``
next to its tensor. The mention classifier has no weights of its own;
its losses train the shared encoder.
"""

import torch
from torch import nn

from src.spanproto.domain.episode import LabeledSentence
from src.spanproto.domain.model_config import EncoderConfig
from src.spanproto.ml.encoder import EncodedSentence, TokenEncoder, encode
from src.spanproto.ml.span_extractor import BoundaryMatrix, SpanScorer, boundary_scores


class SpanProtoModel(nn.Module):
    """Shared token encoder plus span scorer."""

    def __init__(self, config: EncoderConfig) -> None:
        super().__init__()
        self.config = config
        self.encoder = TokenEncoder(config)
        self.scorer = SpanScorer(config.embedding_dim)
        self.to(config.torch_dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.config.torch_dtype

    def encode(self, sentence: LabeledSentence) -> EncodedSentence:
        """Contextual embeddings of a sentence."""
        return encode(sentence, self.encoder)

    def boundary(self, encoded: EncodedSentence) -> BoundaryMatrix:
        """Span scores of an encoded sentence."""
        return boundary_scores(encoded, self.scorer)

    def forward(self, sentence: LabeledSentence) -> tuple[EncodedSentence, BoundaryMatrix]:
        encoded = self.encode(sentence)
        return encoded, self.boundary(encoded)

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        """Shape of every trainable tensor, by name."""
        return {name: tuple(p.shape) for name, p in self.named_parameters()}
