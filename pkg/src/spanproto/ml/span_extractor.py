"""Class-agnostic span extraction over a global boundary matrix.

Every token pair ``(i, j)`` with ``i <= j`` gets a score

    f(i, j) = q_i . k_j + w_v . (h_i + h_j)

where ``q_i = W_q h_i + b_q`` and ``k_j = W_k h_j + b_k``. Cells with
``i > j`` are never read: every sum and every decode runs over the upper
triangle only, so no infinities enter the arithmetic.
"""

import logging
from dataclasses import dataclass

import torch
from torch import nn

from src.spanproto.domain.episode import LabeledSentence, Span
from src.spanproto.domain.model_config import DecodeConfig
from src.spanproto.ml.encoder import EncodedSentence

logger = logging.getLogger(__name__)


class SpanExtractorError(Exception):
    """Base error for span extraction."""


class ShapeMismatchError(SpanExtractorError):
    """Raised when tensors from different shapes are combined."""


class NonFiniteScoreError(SpanExtractorError):
    """Raised when a boundary score is NaN or infinite."""


class SpanScorer(nn.Module):
    """Trainable weights W_q, b_q, W_k, b_k and w_v."""

    def __init__(self, dim: int) -> None:
        super().__init__()
        self.query = nn.Linear(dim, dim)
        self.key = nn.Linear(dim, dim)
        self.w_v = nn.Parameter(torch.empty(dim))
        nn.init.normal_(self.w_v, std=dim**-0.5)

    @property
    def dim(self) -> int:
        return self.w_v.shape[0]


@dataclass(frozen=True)
class BoundaryMatrix:
    """L x L matrix of span scores; only cells with ``i <= j`` are meaningful."""

    scores: torch.Tensor

    @property
    def length(self) -> int:
        return self.scores.shape[0]

    def upper_indices(self) -> torch.Tensor:
        """``(2, n)`` row/column indices of the upper triangle, row-major."""
        return torch.triu_indices(self.length, self.length, device=self.scores.device)

    def upper_values(self) -> torch.Tensor:
        """Scores of the ``L(L+1)/2`` cells with ``i <= j``, row-major."""
        rows, cols = self.upper_indices()
        return self.scores[rows, cols]

    def probabilities(self) -> torch.Tensor:
        """Sigmoid of every score (masked cells included, never read)."""
        return torch.sigmoid(self.scores)


def _hidden(encoded: EncodedSentence | torch.Tensor) -> torch.Tensor:
    return encoded.hidden if isinstance(encoded, EncodedSentence) else encoded


def project_qk(
    encoded: EncodedSentence | torch.Tensor,
    scorer: SpanScorer,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Compute the query and key embeddings Q and K, both ``(L, h)``.

    Raises:
        ShapeMismatchError: If H's width differs from the scorer's.
    """
    hidden = _hidden(encoded)
    if hidden.dim() != 2 or hidden.shape[1] != scorer.dim:
        raise ShapeMismatchError(
            f"expected H of shape (L, {scorer.dim}), got {tuple(hidden.shape)}"
        )
    return scorer.query(hidden), scorer.key(hidden)


def score_pairs(
    encoded: EncodedSentence | torch.Tensor,
    queries: torch.Tensor,
    keys: torch.Tensor,
    scorer: SpanScorer,
) -> BoundaryMatrix:
    """Score every token pair: ``f(i, j) = q_i . k_j + w_v . (h_i + h_j)``.

    Raises:
        ShapeMismatchError: If H, Q and K disagree in shape.
    """
    hidden = _hidden(encoded)
    if not (hidden.shape == queries.shape == keys.shape):
        raise ShapeMismatchError(
            f"H {tuple(hidden.shape)}, Q {tuple(queries.shape)} and "
            f"K {tuple(keys.shape)} must share one shape"
        )
    unary = hidden @ scorer.w_v
    scores = queries @ keys.T + unary.unsqueeze(1) + unary.unsqueeze(0)
    return BoundaryMatrix(scores=scores)


def boundary_scores(encoded: EncodedSentence, scorer: SpanScorer) -> BoundaryMatrix:
    """Project and score in one call."""
    queries, keys = project_qk(encoded, scorer)
    return score_pairs(encoded, queries, keys, scorer)


def target_matrix(
    sentence: LabeledSentence,
    dtype: torch.dtype = torch.float32,
) -> BoundaryMatrix:
    """Binary boundary matrix: 1 at every gold mention cell, 0 elsewhere."""
    length = sentence.length
    target = torch.zeros(length, length, dtype=dtype)
    for start, end in sentence.gold_spans():
        target[start, end] = 1.0
    return BoundaryMatrix(scores=target)


def span_loss(scores: BoundaryMatrix, target: BoundaryMatrix) -> torch.Tensor:
    """Span cross-entropy over the upper triangle.

    ``log(1 + sum_{i<=j} exp((-1)^Omega[i][j] * f(i, j)))``, evaluated as a
    log-sum-exp with an extra zero logit.

    Raises:
        ShapeMismatchError: If the matrices differ in size.
        NonFiniteScoreError: If any upper-triangle score is not finite.
    """
    if scores.length != target.length:
        raise ShapeMismatchError(
            f"score matrix is {scores.length}x{scores.length}, "
            f"target is {target.length}x{target.length}"
        )
    values = scores.upper_values()
    if not torch.isfinite(values).all():
        raise NonFiniteScoreError("boundary matrix contains non-finite scores")
    gold = target.upper_values().to(values.dtype)
    signed = (1.0 - 2.0 * gold) * values
    return torch.logsumexp(torch.cat([signed.new_zeros(1), signed]), dim=0)


def decode(scores: BoundaryMatrix, config: DecodeConfig) -> set[Span]:
    """Return every span whose sigmoid score reaches the threshold.

    Nested and overlapping spans are all kept.
    """
    with torch.no_grad():
        rows, cols = scores.upper_indices()
        probabilities = torch.sigmoid(scores.scores.detach()[rows, cols])
        keep = probabilities >= config.threshold
    return {
        Span(start=int(i), end=int(j))
        for i, j in zip(rows[keep].tolist(), cols[keep].tolist(), strict=True)
    }
