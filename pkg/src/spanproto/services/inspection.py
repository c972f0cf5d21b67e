"""JSON dumps for inspecting one episode: boundary scores and span embeddings."""

import json
import logging
from pathlib import Path
from typing import Any

from src.spanproto.domain.episode import Episode, Span
from src.spanproto.domain.model_config import DecodeConfig, MarginConfig
from src.spanproto.ml.mention_classifier import classify, span_representation
from src.spanproto.ml.model import SpanProtoModel
from src.spanproto.services.evaluator import predict_episode

logger = logging.getLogger(__name__)


def _pairs(spans: set[Span]) -> list[list[int]]:
    return [list(span.as_pair()) for span in sorted(spans, key=Span.as_pair)]


def inspect_episode(
    model: SpanProtoModel,
    episode: Episode,
    decode_config: DecodeConfig,
    margin_config: MarginConfig,
    *,
    embeddings: bool = False,
) -> dict[str, Any]:
    """Build the inspection dump of one episode.

    Every query sentence gets its tokens, an L x L table of sigmoid span
    scores (``None`` below the diagonal), the decoded spans and the gold
    spans. With ``embeddings`` the dump also carries the prototype
    vectors and, per query sentence, the ``u`` vector and classifier
    verdict of every decoded and gold span.
    """
    model.eval()
    prediction = predict_episode(model, episode, decode_config, margin_config)
    sentences = []
    for sentence, result in zip(episode.query, prediction.sentences, strict=True):
        probabilities = result.boundary.probabilities().tolist()
        table = [
            [probabilities[i][j] if i <= j else None for j in range(sentence.length)]
            for i in range(sentence.length)
        ]
        entry: dict[str, Any] = {
            "tokens": list(sentence.tokens),
            "scores": table,
            "decoded": _pairs(result.decoded),
            "gold": [[m.span.start, m.span.end, m.type] for m in sentence.mentions],
            "distractors": [[m.span.start, m.span.end, m.type] for m in sentence.distractors],
        }
        if embeddings:
            spans = result.decoded | {m.span for m in sentence.mentions}
            entry["spans"] = []
            for span in sorted(spans, key=Span.as_pair):
                representation = span_representation(result.encoded, span)
                entry["spans"].append(
                    {
                        "span": list(span.as_pair()),
                        "text": sentence.surface(span),
                        "u": representation.vector.tolist(),
                        "decoded": span in result.decoded,
                        "verdict": classify(representation, prediction.prototypes, margin_config),
                    }
                )
        sentences.append(entry)

    dump: dict[str, Any] = {
        "types": list(episode.types),
        "threshold": decode_config.threshold,
        "radius": margin_config.radius,
        "query": sentences,
    }
    if embeddings:
        dump["prototypes"] = {
            type_name: {
                "vector": prediction.prototypes.centroids[i].tolist(),
                "support_count": prediction.prototypes.counts[i],
            }
            for i, type_name in enumerate(prediction.prototypes.types)
        }
    return dump


def write_inspection(dump: dict[str, Any], path: Path) -> Path:
    """Write an inspection dump as pretty-printed JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(dump, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    logger.info("Wrote inspection dump %s", path)
    return path
