"""Episodic training of the span extractor and mention classifier.

Each step samples an episode, accumulates the span loss over its support
sentences, builds prototypes from the support mentions, and for every
query sentence adds the prototypical loss of its gold mentions and the
margin loss of the extractor's false positives. The classifier terms are
weighted by λ, which is 0 during the first T′ (pretraining) steps and 1
afterwards.
"""

import json
import logging
import random
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import TypeVar

import torch

from src.spanproto.domain.episode import Episode, EpisodeDataset, LabeledSentence, Span
from src.spanproto.domain.model_config import DecodeConfig, EncoderConfig, MarginConfig
from src.spanproto.domain.reports import EpisodeLossReport, StepReport
from src.spanproto.domain.training_config import TrainConfig
from src.spanproto.domain.vocabulary import Vocabulary
from src.spanproto.ml.encoder import EncodedSentence
from src.spanproto.ml.mention_classifier import (
    compute_prototypes,
    false_positive_set,
    margin_loss,
    proto_loss,
    span_representation,
)
from src.spanproto.ml.model import SpanProtoModel
from src.spanproto.ml.optimizer import NonFiniteGradientError, WarmupAdamW
from src.spanproto.ml.span_extractor import decode, span_loss, target_matrix
from src.spanproto.utils.checkpoint import save_checkpoint

logger = logging.getLogger(__name__)

Term = TypeVar("Term", float, torch.Tensor)


class TrainingError(Exception):
    """Base error for aborted training runs."""

    def __init__(self, message: str, report: StepReport | None = None) -> None:
        super().__init__(message)
        self.report = report


class EpisodeInvariantError(TrainingError):
    """Raised when a training episode cannot be used."""


class NonFiniteLossError(TrainingError):
    """Raised when a step produces a NaN or infinite loss or gradient."""


def loss_assembly(
    span_terms: Sequence[Term],
    proto_terms: Sequence[Term],
    margin_terms: Sequence[Term],
    support_size: int,
    query_size: int,
    lam: float,
) -> Term:
    """Combine per-sentence losses into the episode objective.

    ``(1/|S|) * sum(span) + (λ/|Q|) * (sum(proto) + sum(margin))``.
    With λ = 0 the classifier terms are not touched at all.
    """
    if support_size < 1 or query_size < 1:
        raise ValueError("support and query sizes must be at least 1")
    total = sum(span_terms) / support_size
    if lam == 0:
        return total
    return total + lam / query_size * (sum(proto_terms) + sum(margin_terms))


@dataclass
class EpisodeLoss:
    """Differentiable episode objective and its parts."""

    total: torch.Tensor
    span_terms: list[torch.Tensor]
    proto_terms: list[torch.Tensor]
    margin_terms: list[torch.Tensor]
    false_positives: list[set[Span]] = field(default_factory=list)

    def report(self, episode_index: int, lam: float) -> EpisodeLossReport:
        """Detach the terms into a report whose total is re-assembled from them."""
        spans = [t.item() for t in self.span_terms]
        protos = [t.item() for t in self.proto_terms]
        margins = [t.item() for t in self.margin_terms]
        return EpisodeLossReport(
            episode_index=episode_index,
            span_loss=sum(spans),
            proto_loss=sum(protos),
            margin_loss=sum(margins),
            support_size=len(spans),
            query_size=len(protos),
            total=loss_assembly(spans, protos, margins, len(spans), len(protos), lam),
            false_positive_counts=[len(fp) for fp in self.false_positives],
        )


def query_false_positives(
    model: SpanProtoModel,
    episode: Episode,
    encoded_query: Sequence[EncodedSentence],
    decode_config: DecodeConfig,
) -> list[set[Span]]:
    """Decode each query sentence and keep the spans that are not gold."""
    false_positives = []
    for encoded, sentence in zip(encoded_query, episode.query, strict=True):
        predicted = decode(model.boundary(encoded), decode_config)
        gold = [m.span for m in sentence.mentions]
        false_positives.append(false_positive_set(predicted, gold))
    return false_positives


def episode_loss(
    model: SpanProtoModel,
    episode: Episode,
    config: TrainConfig,
    lam: float,
    false_positives: Sequence[set[Span]] | None = None,
) -> EpisodeLoss:
    """Compute the episode objective.

    Args:
        model: Model whose parameters receive gradients.
        episode: The sampled episode.
        config: Decode threshold and margin settings.
        lam: Classifier loss weight.
        false_positives: Per-query false-positive spans. When omitted they
            are obtained by decoding the query sentences with the current
            model; passing them pins the selection, which is not differentiable.
    """
    span_terms = []
    encoded_support = []
    for sentence in episode.support:
        encoded, boundary = model(sentence)
        encoded_support.append(encoded)
        span_terms.append(span_loss(boundary, target_matrix(sentence, dtype=model.dtype)))

    prototypes = compute_prototypes(zip(encoded_support, episode.support, strict=True), episode.types)
    encoded_query = [model.encode(sentence) for sentence in episode.query]
    if false_positives is None:
        false_positives = query_false_positives(model, episode, encoded_query, config.decode)

    margin_config: MarginConfig = config.margin
    proto_terms = []
    margin_terms = []
    for encoded, sentence, fp_spans in zip(encoded_query, episode.query, false_positives, strict=True):
        gold = [(span_representation(encoded, m.span), m.type) for m in sentence.mentions]
        proto_terms.append(proto_loss(gold, prototypes))
        fp_reps = [span_representation(encoded, span) for span in sorted(fp_spans, key=Span.as_pair)]
        margin_terms.append(margin_loss(fp_reps, prototypes, margin_config))

    total = loss_assembly(
        span_terms,
        proto_terms,
        margin_terms,
        len(episode.support),
        len(episode.query),
        lam,
    )
    return EpisodeLoss(
        total=total,
        span_terms=span_terms,
        proto_terms=proto_terms,
        margin_terms=margin_terms,
        false_positives=list(false_positives),
    )


def drop_words(episode: Episode, rate: float, rng: random.Random) -> Episode:
    """Replace a random share of an episode's distinct words with unseen ones.

    Every occurrence of a dropped word gets the same replacement, so
    support and query still agree on it the way they agree on a word the
    vocabulary has never seen. Spans are unchanged.
    """
    if rate == 0:
        return episode
    words = sorted({t for s in (*episode.support, *episode.query) for t in s.tokens})
    salt = rng.getrandbits(32)
    replaced = {w: f"{w}#{salt:08x}" for w in words if rng.random() < rate}
    if not replaced:
        return episode

    def swap(sentence: LabeledSentence) -> LabeledSentence:
        tokens = tuple(replaced.get(t, t) for t in sentence.tokens)
        return sentence.model_copy(update={"tokens": tokens})

    return episode.model_copy(
        update={
            "support": tuple(swap(s) for s in episode.support),
            "query": tuple(swap(s) for s in episode.query),
        }
    )


def build_vocabulary(data: EpisodeDataset, encoder_config: EncoderConfig) -> EncoderConfig:
    """Return ``encoder_config`` with a vocabulary built from ``data`` if it has none."""
    if encoder_config.vocabulary.tokens:
        return encoder_config
    vocabulary = Vocabulary.build(
        data.vocabulary_tokens(),
        min_count=encoder_config.min_token_count,
        unknown_buckets=encoder_config.vocabulary.unknown_buckets,
    )
    logger.info(
        "Built vocabulary: %d tokens + %d unknown buckets",
        len(vocabulary.tokens),
        vocabulary.unknown_buckets,
    )
    return encoder_config.model_copy(update={"vocabulary": vocabulary})


def validate_dataset(data: EpisodeDataset, encoder_config: EncoderConfig) -> None:
    """Check the dataset is usable for training.

    Raises:
        EpisodeInvariantError: On an empty dataset or an over-long sentence.
    """
    if data.is_empty:
        raise EpisodeInvariantError("training dataset is empty")
    for index, episode in enumerate(data.episodes):
        for sentence in (*episode.support, *episode.query):
            if sentence.length > encoder_config.max_length:
                raise EpisodeInvariantError(
                    f"episode {index}: sentence of {sentence.length} tokens exceeds "
                    f"max length {encoder_config.max_length}"
                )


@dataclass
class TrainResult:
    """Trained model and the full report stream."""

    model: SpanProtoModel
    reports: list[StepReport]


class Trainer:
    """Runs the two-phase training loop over an episode dataset.

    Args:
        config: Training hyperparameters.
        encoder_config: Encoder shape; its vocabulary is built from the
            training data when empty.
        run_dir: Optional directory for the step log and checkpoints.
        tensorboard: Also write TensorBoard scalars under ``run_dir``.
    """

    def __init__(
        self,
        config: TrainConfig,
        encoder_config: EncoderConfig | None = None,
        run_dir: Path | None = None,
        tensorboard: bool = False,
    ) -> None:
        self._config = config
        self._encoder_config = encoder_config or EncoderConfig()
        self._run_dir = run_dir
        self._tensorboard = tensorboard and run_dir is not None

    @property
    def step_log_path(self) -> Path | None:
        return self._run_dir / "steps.jsonl" if self._run_dir else None

    def checkpoint_path(self, step: int) -> Path | None:
        return self._run_dir / "checkpoints" / f"step_{step:06d}.json" if self._run_dir else None

    def train(self, data: EpisodeDataset) -> TrainResult:
        """Run all T steps and return the final model and reports.

        Raises:
            EpisodeInvariantError: If the dataset is empty or unusable.
            NonFiniteLossError: If a loss or gradient becomes non-finite.
        """
        config = self._config
        encoder_config = build_vocabulary(data, self._encoder_config)
        validate_dataset(data, encoder_config)

        torch.manual_seed(config.seed)
        sampler = random.Random(config.seed)
        dropout = random.Random(f"word-dropout-{config.seed}")
        model = SpanProtoModel(encoder_config)
        model.train()
        optimizer = WarmupAdamW(model, config.optimizer)

        logger.info(
            "Training: T=%d T'=%d theta=%.2f r=%.2f margin_loss=%s lr=%g warmup=%.2f "
            "seed=%d episodes=%d",
            config.total_steps,
            config.pretrain_steps,
            config.decode.threshold,
            config.margin.radius,
            config.margin.margin_loss,
            config.optimizer.learning_rate,
            config.optimizer.warmup_fraction,
            config.seed,
            len(data),
        )

        writer = None
        if self._tensorboard:
            from torch.utils.tensorboard import SummaryWriter

            writer = SummaryWriter(log_dir=str(self._run_dir / "tensorboard"))

        log_file = None
        if self.step_log_path is not None:
            self.step_log_path.parent.mkdir(parents=True, exist_ok=True)
            log_file = self.step_log_path.open("w", encoding="utf-8")

        reports: list[StepReport] = []
        try:
            for step in range(1, config.total_steps + 1):
                report = self._step(model, optimizer, data, sampler, dropout, step)
                reports.append(report)
                if log_file is not None:
                    log_file.write(json.dumps(report.to_log_line()) + "\n")
                if writer is not None:
                    writer.add_scalar("loss/total", report.total, step)
                    writer.add_scalar("lr", report.learning_rate, step)
                if step % config.log_every == 0 or step == config.total_steps:
                    logger.info(
                        "step %d/%d lambda=%.0f lr=%.2e loss=%.4f",
                        step,
                        config.total_steps,
                        report.lam,
                        report.learning_rate,
                        report.total,
                    )
                if (step % config.checkpoint_every == 0 or step == config.total_steps) and (
                    path := self.checkpoint_path(step)
                ):
                    save_checkpoint(model, path, step=step)
        finally:
            if log_file is not None:
                log_file.close()
            if writer is not None:
                writer.close()

        return TrainResult(model=model, reports=reports)

    def _step(
        self,
        model: SpanProtoModel,
        optimizer: WarmupAdamW,
        data: EpisodeDataset,
        sampler: random.Random,
        dropout: random.Random,
        step: int,
    ) -> StepReport:
        config = self._config
        lam = config.lambda_at(step)
        optimizer.zero_grad()

        indices = [sampler.randrange(len(data)) for _ in range(config.episodes_per_step)]
        episodes = [drop_words(data.episodes[i], config.word_dropout, dropout) for i in indices]
        losses = [episode_loss(model, episode, config, lam) for episode in episodes]
        episode_reports = [
            loss.report(index, lam) for index, loss in zip(indices, losses, strict=True)
        ]
        objective = torch.stack([loss.total for loss in losses]).mean()
        rate = optimizer.learning_rate_at(step)
        report = StepReport(
            step=step,
            lam=lam,
            learning_rate=rate,
            episodes=episode_reports,
            total=sum(r.total for r in episode_reports) / len(episode_reports),
        )
        if not torch.isfinite(objective):
            raise NonFiniteLossError(f"non-finite loss at step {step}", report)

        objective.backward()
        try:
            optimizer.step(step)
        except NonFiniteGradientError as exc:
            raise NonFiniteLossError(f"step {step}: {exc}", report) from exc
        return report


def train(
    data: EpisodeDataset,
    config: TrainConfig,
    encoder_config: EncoderConfig | None = None,
) -> TrainResult:
    """Train a model on ``data`` without writing any files."""
    return Trainer(config, encoder_config).train(data)
