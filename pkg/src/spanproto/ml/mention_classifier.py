"""Prototype-based mention classification with rejection.

A span is represented by the sum of the embeddings at its two
boundaries, ``u = h_start + h_end``. Each episode type gets a prototype,
the mean ``u`` of its support mentions. Distances are Euclidean.
"""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from src.spanproto.domain.episode import LabeledSentence, Span
from src.spanproto.domain.model_config import MarginConfig
from src.spanproto.ml.encoder import EncodedSentence

logger = logging.getLogger(__name__)


class MentionClassifierError(Exception):
    """Base error for mention classification."""


class InvalidSpanError(MentionClassifierError):
    """Raised when a span does not fit the encoded sentence."""


class PrototypeUndefinedError(MentionClassifierError):
    """Raised when a type has no support mention to average."""

    def __init__(self, type_name: str) -> None:
        super().__init__(f"type {type_name!r} has no support mention; prototype undefined")
        self.type_name = type_name


@dataclass(frozen=True)
class SpanRepresentation:
    """Boundary representation ``u`` of one span."""

    vector: torch.Tensor
    span: Span


@dataclass(frozen=True)
class PrototypeSet:
    """Per-type centroids, in episode type order."""

    types: tuple[str, ...]
    centroids: torch.Tensor
    counts: tuple[int, ...]

    def index(self, type_name: str) -> int:
        return self.types.index(type_name)

    def centroid(self, type_name: str) -> torch.Tensor:
        return self.centroids[self.index(type_name)]


def span_representation(encoded: EncodedSentence, span: Span) -> SpanRepresentation:
    """Sum the start and end rows of H.

    Raises:
        InvalidSpanError: If the span does not fit the sentence.
    """
    if not span.fits(encoded.length):
        raise InvalidSpanError(f"span {span} outside sentence of length {encoded.length}")
    hidden = encoded.hidden
    return SpanRepresentation(vector=hidden[span.start] + hidden[span.end], span=span)


def compute_prototypes(
    support: Iterable[tuple[EncodedSentence, LabeledSentence]],
    types: Sequence[str],
) -> PrototypeSet:
    """Average the gold support span representations of each type.

    Args:
        support: Encoded support sentences paired with their gold labels.
        types: Episode types; fixes the prototype order.

    Raises:
        PrototypeUndefinedError: If a type has no support mention.
    """
    grouped: dict[str, list[torch.Tensor]] = {t: [] for t in types}
    for encoded, sentence in support:
        for mention in sentence.mentions:
            if mention.type in grouped:
                grouped[mention.type].append(span_representation(encoded, mention.span).vector)
    for type_name, vectors in grouped.items():
        if not vectors:
            raise PrototypeUndefinedError(type_name)
    centroids = torch.stack([torch.stack(grouped[t]).mean(dim=0) for t in types])
    return PrototypeSet(
        types=tuple(types),
        centroids=centroids,
        counts=tuple(len(grouped[t]) for t in types),
    )


def prototype_distances(vectors: torch.Tensor, prototypes: PrototypeSet) -> torch.Tensor:
    """Euclidean distances ``(M, N)`` between ``M`` span vectors and ``N`` prototypes."""
    if vectors.dim() == 1:
        vectors = vectors.unsqueeze(0)
    diff = vectors.unsqueeze(1) - prototypes.centroids.unsqueeze(0)
    return torch.linalg.vector_norm(diff, dim=-1)


def type_probabilities(vectors: torch.Tensor, prototypes: PrototypeSet) -> torch.Tensor:
    """Softmax over types of negative distances, one row per span."""
    return torch.softmax(-prototype_distances(vectors, prototypes), dim=-1)


def proto_loss(
    mentions: Sequence[tuple[SpanRepresentation, str]],
    prototypes: PrototypeSet,
) -> torch.Tensor:
    """Mean negative log-probability of each gold mention's own type.

    An empty mention list gives 0.
    """
    if not mentions:
        return prototypes.centroids.new_zeros(())
    vectors = torch.stack([rep.vector for rep, _ in mentions])
    targets = torch.tensor(
        [prototypes.index(type_name) for _, type_name in mentions],
        device=vectors.device,
    )
    return F.cross_entropy(-prototype_distances(vectors, prototypes), targets)


def false_positive_set(
    predicted: Iterable[Span],
    gold: Iterable[Span],
) -> set[Span]:
    """Predicted spans whose boundaries match no gold span."""
    gold_pairs = {span.as_pair() for span in gold}
    return {span for span in predicted if span.as_pair() not in gold_pairs}


def margin_loss(
    false_positives: Sequence[SpanRepresentation],
    prototypes: PrototypeSet,
    config: MarginConfig,
) -> torch.Tensor:
    """Hinge pushing every false positive at least ``r`` from every prototype.

    ``mean over (fp, t) of max(0, r - d(u_fp, c_t))``; 0 when there are no
    false positives or the margin objective is disabled.
    """
    if not false_positives or not config.margin_loss:
        return prototypes.centroids.new_zeros(())
    vectors = torch.stack([rep.vector for rep in false_positives])
    return F.relu(config.radius - prototype_distances(vectors, prototypes)).mean()


def classify_many(
    vectors: torch.Tensor,
    prototypes: PrototypeSet,
    config: MarginConfig,
) -> list[str | None]:
    """Nearest-prototype type per row, or None when every prototype is beyond ``r``.

    Ties go to the type declared first.
    """
    if vectors.shape[0] == 0:
        return []
    with torch.no_grad():
        distances = prototype_distances(vectors.detach(), prototypes)
        index = distances.argmin(dim=-1)
        nearest = distances.gather(1, index.unsqueeze(1)).squeeze(1)
    return [
        None if d > config.radius else prototypes.types[i]
        for d, i in zip(nearest.tolist(), index.tolist(), strict=True)
    ]


def classify(
    representation: SpanRepresentation,
    prototypes: PrototypeSet,
    config: MarginConfig,
) -> str | None:
    """Type of the nearest prototype, or None (rejected) when farther than ``r``."""
    return classify_many(representation.vector.unsqueeze(0), prototypes, config)[0]
