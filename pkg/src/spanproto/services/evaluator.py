"""Two-stage evaluation: decode candidate spans, then classify them with rejection.

For each episode the prototypes come from the support set's gold
mentions. Query spans are decoded with threshold θ, every candidate is
assigned its nearest prototype, and candidates farther than ``r`` from
all prototypes are dropped. A prediction counts as correct only when its
``(start, end, type)`` matches a gold mention exactly.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import torch

from src.spanproto.domain.episode import Episode, EpisodeDataset, Span
from src.spanproto.domain.model_config import DecodeConfig, MarginConfig
from src.spanproto.domain.reports import PRF, EpisodeEvalRow, ErrorBreakdown, EvalReport
from src.spanproto.ml.encoder import EncodedSentence
from src.spanproto.ml.mention_classifier import (
    PrototypeSet,
    classify_many,
    compute_prototypes,
    span_representation,
)
from src.spanproto.ml.model import SpanProtoModel
from src.spanproto.ml.span_extractor import BoundaryMatrix, decode

logger = logging.getLogger(__name__)

Triple = tuple[int, int, str]


@dataclass
class SentencePrediction:
    """Decoded and classified spans of one query sentence."""

    decoded: set[Span]
    verdicts: dict[Span, str | None]
    encoded: EncodedSentence
    boundary: BoundaryMatrix

    @property
    def predictions(self) -> set[Triple]:
        """Accepted ``(start, end, type)`` predictions."""
        return {
            (span.start, span.end, type_name)
            for span, type_name in self.verdicts.items()
            if type_name is not None
        }

    @property
    def rejected(self) -> set[Span]:
        return {span for span, type_name in self.verdicts.items() if type_name is None}


@dataclass
class EpisodePrediction:
    """Prototypes and per-query predictions of one episode."""

    prototypes: PrototypeSet
    sentences: list[SentencePrediction] = field(default_factory=list)


def predict_episode(
    model: SpanProtoModel,
    episode: Episode,
    decode_config: DecodeConfig,
    margin_config: MarginConfig,
) -> EpisodePrediction:
    """Run both stages on one episode with frozen parameters."""
    with torch.no_grad():
        encoded_support = [model.encode(s) for s in episode.support]
        prototypes = compute_prototypes(
            zip(encoded_support, episode.support, strict=True), episode.types
        )
        result = EpisodePrediction(prototypes=prototypes)
        for sentence in episode.query:
            encoded, boundary = model(sentence)
            decoded = decode(boundary, decode_config)
            spans = sorted(decoded, key=Span.as_pair)
            if spans:
                vectors = torch.stack([span_representation(encoded, s).vector for s in spans])
                labels = classify_many(vectors, prototypes, margin_config)
            else:
                labels = []
            result.sentences.append(
                SentencePrediction(
                    decoded=decoded,
                    verdicts=dict(zip(spans, labels, strict=True)),
                    encoded=encoded,
                    boundary=boundary,
                )
            )
    return result


def error_analysis(
    predictions: Sequence[set[Triple]],
    gold: Sequence[set[Triple]],
) -> ErrorBreakdown:
    """Split false positives into wrong-boundary and wrong-type errors.

    Args:
        predictions: Predicted triples, one set per sentence.
        gold: Gold triples, aligned with ``predictions``.

    Returns:
        Counts and percentages of FP-Span (boundary matches no gold span)
        and FP-Type (boundary matches a gold span, type differs). With no
        false positives both percentages are 0 and the flag is set.
    """
    fp_span = 0
    fp_type = 0
    for predicted, expected in zip(predictions, gold, strict=True):
        gold_boundaries = {(start, end) for start, end, _ in expected}
        for triple in predicted - expected:
            if triple[:2] in gold_boundaries:
                fp_type += 1
            else:
                fp_span += 1
    total = fp_span + fp_type
    if total == 0:
        return ErrorBreakdown(
            false_positives=0,
            fp_span_count=0,
            fp_type_count=0,
            fp_span_pct=0.0,
            fp_type_pct=0.0,
            no_false_positives=True,
        )
    return ErrorBreakdown(
        false_positives=total,
        fp_span_count=fp_span,
        fp_type_count=fp_type,
        fp_span_pct=100.0 * fp_span / total,
        fp_type_pct=100.0 * fp_type / total,
    )


def score_predictions(
    predictions: Sequence[set[Triple]],
    gold: Sequence[set[Triple]],
) -> PRF:
    """Micro precision/recall/F1 over aligned per-sentence triple sets."""
    predicted = sum(len(p) for p in predictions)
    expected = sum(len(g) for g in gold)
    correct = sum(len(p & g) for p, g in zip(predictions, gold, strict=True))
    return PRF.from_counts(predicted, expected, correct)


def evaluate(
    data: EpisodeDataset,
    model: SpanProtoModel,
    decode_config: DecodeConfig,
    margin_config: MarginConfig,
) -> EvalReport:
    """Evaluate a trained model on every episode of ``data``.

    Returns:
        EvalReport with micro and episode-macro scores, class-agnostic span
        detection scores, the FP-Span/FP-Type breakdown and rejection counts.
    """
    model.eval()
    all_predictions: list[set[Triple]] = []
    all_gold: list[set[Triple]] = []
    all_decoded: list[set[tuple[int, int]]] = []
    all_gold_spans: list[set[tuple[int, int]]] = []
    rows: list[EpisodeEvalRow] = []
    rejected_total = 0
    distractor_hits = 0
    distractor_rejected = 0

    for index, episode in enumerate(data.episodes):
        prediction = predict_episode(model, episode, decode_config, margin_config)
        episode_predictions = []
        episode_gold = []
        episode_rejected = 0
        for sentence, result in zip(episode.query, prediction.sentences, strict=True):
            episode_predictions.append(result.predictions)
            episode_gold.append(sentence.gold_keys())
            all_decoded.append({s.as_pair() for s in result.decoded})
            all_gold_spans.append(sentence.gold_spans())
            episode_rejected += len(result.rejected)
            for distractor in sentence.distractors:
                if distractor.span in result.verdicts:
                    distractor_hits += 1
                    if result.verdicts[distractor.span] is None:
                        distractor_rejected += 1
        rejected_total += episode_rejected
        all_predictions.extend(episode_predictions)
        all_gold.extend(episode_gold)
        rows.append(
            EpisodeEvalRow(
                episode_index=index,
                scores=score_predictions(episode_predictions, episode_gold),
                rejected=episode_rejected,
            )
        )

    span_detection = PRF.from_counts(
        sum(len(d) for d in all_decoded),
        sum(len(g) for g in all_gold_spans),
        sum(len(d & g) for d, g in zip(all_decoded, all_gold_spans, strict=True)),
    )
    report = EvalReport(
        threshold=decode_config.threshold,
        radius=margin_config.radius,
        micro=score_predictions(all_predictions, all_gold),
        macro_f1=sum(r.scores.f1 for r in rows) / len(rows) if rows else 0.0,
        span_detection=span_detection,
        errors=error_analysis(all_predictions, all_gold),
        rejected_count=rejected_total,
        distractor_proposals=distractor_hits,
        distractor_rejection_rate=(
            distractor_rejected / distractor_hits if distractor_hits else None
        ),
        episodes=rows,
    )
    logger.info(
        "Evaluated %d episodes: P=%.4f R=%.4f F1=%.4f (rejected %d)",
        len(data),
        report.precision,
        report.recall,
        report.f1,
        report.rejected_count,
    )
    return report
