"""Tests for loss assembly and the episodic training loop."""

import json
import math
import random
from pathlib import Path

import pytest
import torch
from pydantic import ValidationError

from src.spanproto.domain.episode import EpisodeDataset, Span
from src.spanproto.domain.generator_config import GeneratorConfig
from src.spanproto.domain.model_config import EncoderConfig, MarginConfig
from src.spanproto.domain.training_config import TrainConfig
from src.spanproto.ml.mention_classifier import false_positive_set
from src.spanproto.ml.model import SpanProtoModel
from src.spanproto.services import trainer as trainer_module
from src.spanproto.services.synthetic_generator import generate_synthetic
from src.spanproto.services.trainer import (
    EpisodeInvariantError,
    EpisodeLoss,
    NonFiniteLossError,
    Trainer,
    build_vocabulary,
    drop_words,
    episode_loss,
    loss_assembly,
    train,
)
from src.spanproto.utils.checkpoint import load_checkpoint


def _data(episodes: int = 4) -> EpisodeDataset:
    config = GeneratorConfig(n_ways=3, k_shots=1, query_count=3, episodes=episodes)
    return generate_synthetic(config, seed=0)


def _encoder_config(dtype: str = "float32") -> EncoderConfig:
    return EncoderConfig(embedding_dim=8, mixing_layers=1, dtype=dtype)


def _train_config(**overrides: object) -> TrainConfig:
    values: dict[str, object] = {
        "total_steps": 6,
        "pretrain_steps": 3,
        "seed": 1,
        "checkpoint_every": 3,
        "log_every": 2,
    }
    values.update(overrides)
    return TrainConfig.model_validate(values)


class TestLossAssembly:
    """Tests for combining per-sentence losses."""

    def test_pretraining_averages_span_loss(self) -> None:
        """λ = 0 with span losses 1 and 3 over |S| = 2 gives 2."""
        assert loss_assembly([1.0, 3.0], [9.0], [9.0], 2, 1, 0.0) == 2.0

    def test_joint_phase_adds_classifier_terms(self) -> None:
        """λ = 1, |Q| = 1: span 0, proto 0.5 and margin 0.25 give 0.75."""
        assert loss_assembly([0.0], [0.5], [0.25], 1, 1, 1.0) == pytest.approx(0.75)

    def test_pretraining_ignores_classifier_terms(self) -> None:
        """With λ = 0 proto and margin values have no effect, even NaN."""
        value = loss_assembly([2.0], [math.nan], [math.inf], 1, 1, 0.0)
        assert value == 2.0

    def test_sizes_must_be_positive(self) -> None:
        """Empty support or query sets are rejected."""
        with pytest.raises(ValueError):
            loss_assembly([1.0], [], [], 0, 1, 0.0)

    def test_works_on_tensors(self) -> None:
        """Tensor terms assemble into a differentiable scalar."""
        span = torch.tensor(2.0, requires_grad=True)
        proto = torch.tensor(1.0, requires_grad=True)
        total = loss_assembly([span], [proto], [torch.tensor(0.0)], 2, 2, 1.0)
        total.backward()
        assert span.grad.item() == pytest.approx(0.5)
        assert proto.grad.item() == pytest.approx(0.5)


class TestTrainConfig:
    """Tests for TrainConfig validation."""

    def test_pretrain_must_precede_total(self) -> None:
        """T′ must be smaller than T."""
        with pytest.raises(ValidationError, match="must be smaller"):
            TrainConfig(total_steps=100, pretrain_steps=100)

    def test_optimizer_follows_total_steps(self) -> None:
        """The warmup schedule is sized from total_steps."""
        config = TrainConfig(total_steps=500, pretrain_steps=50)
        assert config.optimizer.total_steps == 500
        assert config.optimizer.warmup_steps == 50

    def test_lambda_schedule(self) -> None:
        """λ is 0 before T′ and 1 from T′ on."""
        config = TrainConfig()
        assert config.lambda_at(100) == 0.0
        assert config.lambda_at(199) == 0.0
        assert config.lambda_at(200) == 1.0
        assert config.lambda_at(300) == 1.0


class TestEpisodeLoss:
    """Tests for the episode objective."""

    def _model_and_episode(self) -> tuple[SpanProtoModel, EpisodeLoss, TrainConfig]:
        torch.manual_seed(0)
        data = _data(1)
        model = SpanProtoModel(build_vocabulary(data, _encoder_config("float64")))
        config = _train_config()
        return model, episode_loss(model, data.episodes[0], config, 1.0), config

    def test_report_total_matches_tensor(self) -> None:
        """The report re-assembles the same total as the tensor objective."""
        _, loss, _ = self._model_and_episode()
        report = loss.report(0, 1.0)
        assert report.total == pytest.approx(loss.total.item(), abs=1e-10)
        assert report.support_size == len(_data(1).episodes[0].support)
        assert report.query_size == 3

    def test_margin_disabled(self) -> None:
        """Without the margin objective every margin term is 0."""
        torch.manual_seed(0)
        data = _data(1)
        model = SpanProtoModel(build_vocabulary(data, _encoder_config()))
        config = _train_config(margin=MarginConfig(margin_loss=False))
        episode = data.episodes[0]
        pinned = [{Span(start=0, end=0)} for _ in episode.query]
        loss = episode_loss(model, episode, config, 1.0, false_positives=pinned)
        assert all(term.item() == 0.0 for term in loss.margin_terms)

    def test_gradients_match_finite_differences(self) -> None:
        """Analytic gradients of the full objective match central differences."""
        torch.manual_seed(0)
        data = _data(1)
        episode = data.episodes[0]
        model = SpanProtoModel(build_vocabulary(data, _encoder_config("float64")))
        config = _train_config(margin=MarginConfig(radius=50.0))
        pinned = [
            false_positive_set({Span(start=0, end=0), Span(start=0, end=1)}, [m.span for m in s.mentions])
            for s in episode.query
        ]

        def objective() -> torch.Tensor:
            return episode_loss(model, episode, config, 1.0, false_positives=pinned).total

        model.zero_grad()
        objective().backward()
        eps = 1e-5
        parameters = dict(model.named_parameters())
        for name in ("scorer.w_v", "scorer.query.bias", "encoder.embedding.weight"):
            parameter = parameters[name]
            flat = parameter.data.view(-1)
            analytic = parameter.grad.view(-1)
            for index in range(min(4, flat.numel())):
                original = flat[index].item()
                with torch.no_grad():
                    flat[index] = original + eps
                    plus = objective().item()
                    flat[index] = original - eps
                    minus = objective().item()
                    flat[index] = original
                numeric = (plus - minus) / (2 * eps)
                assert numeric == pytest.approx(analytic[index].item(), rel=1e-4, abs=1e-7)


class TestTrainer:
    """Tests for the training loop."""

    def test_schedule_conformance(self) -> None:
        """Steps before T′ report λ = 0 and a total equal to the averaged span loss."""
        result = train(_data(), _train_config(), _encoder_config())
        assert [r.step for r in result.reports] == [1, 2, 3, 4, 5, 6]
        for report in result.reports:
            if report.step < 3:
                assert report.lam == 0.0
                for episode in report.episodes:
                    expected = episode.span_loss / episode.support_size
                    assert episode.total == pytest.approx(expected, abs=1e-10)
            else:
                assert report.lam == 1.0

    def test_step_total_decomposes(self) -> None:
        """Every report satisfies the loss decomposition identity."""
        result = train(_data(), _train_config(), _encoder_config())
        for report in result.reports:
            for episode in report.episodes:
                expected = episode.span_loss / episode.support_size + report.lam / episode.query_size * (
                    episode.proto_loss + episode.margin_loss
                )
                assert episode.total == pytest.approx(expected, abs=1e-10)

    def test_same_seed_same_run(self) -> None:
        """Two runs with the same seed produce identical losses and parameters."""
        first = train(_data(), _train_config(), _encoder_config())
        second = train(_data(), _train_config(), _encoder_config())
        assert [r.total for r in first.reports] == [r.total for r in second.reports]
        for (name, a), (_, b) in zip(
            first.model.named_parameters(), second.model.named_parameters(), strict=True
        ):
            assert torch.equal(a, b), name

    def test_margin_disabled_reports_zero(self) -> None:
        """With the margin objective off L_mrg is 0 at every step."""
        config = _train_config(margin=MarginConfig(margin_loss=False))
        result = train(_data(), config, _encoder_config())
        assert all(e.margin_loss == 0.0 for r in result.reports for e in r.episodes)

    def test_episodes_per_step(self) -> None:
        """Each step averages the requested number of episodes."""
        result = train(_data(), _train_config(episodes_per_step=2), _encoder_config())
        for report in result.reports:
            assert len(report.episodes) == 2
            mean = sum(e.total for e in report.episodes) / 2
            assert report.total == pytest.approx(mean)

    def test_warmup_rates_reported(self) -> None:
        """The reported learning rate follows the warmup schedule."""
        config = _train_config(total_steps=20, pretrain_steps=2, checkpoint_every=20)
        result = train(_data(), config, _encoder_config())
        rate = config.optimizer.learning_rate
        assert config.optimizer.warmup_steps == 2
        assert result.reports[0].learning_rate == pytest.approx(rate / 2)
        assert result.reports[1].learning_rate == pytest.approx(rate)
        assert result.reports[-1].learning_rate == pytest.approx(rate)

    def test_writes_log_and_checkpoints(self, tmp_path: Path) -> None:
        """A run directory gets one log line per step and periodic checkpoints."""
        trainer = Trainer(_train_config(), _encoder_config(), run_dir=tmp_path)
        result = trainer.train(_data())

        lines = (tmp_path / "steps.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 6
        assert json.loads(lines[0])["step"] == 1
        checkpoints = sorted(p.name for p in (tmp_path / "checkpoints").iterdir())
        assert checkpoints == ["step_000003.json", "step_000006.json"]

        restored = load_checkpoint(tmp_path / "checkpoints" / "step_000006.json")
        for (_, a), (_, b) in zip(
            result.model.named_parameters(), restored.named_parameters(), strict=True
        ):
            assert torch.equal(a, b)

    def test_empty_dataset(self) -> None:
        """Training on no episodes is refused."""
        with pytest.raises(EpisodeInvariantError, match="empty"):
            train(EpisodeDataset(), _train_config(), _encoder_config())

    def test_sentence_longer_than_max_length(self) -> None:
        """Sentences that exceed max_length are refused before training."""
        encoder = EncoderConfig(embedding_dim=8, max_length=4)
        with pytest.raises(EpisodeInvariantError, match="exceeds max length"):
            train(_data(), _train_config(), encoder)

    def test_non_finite_loss(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """A NaN objective aborts with the offending step's report."""

        def broken(*args: object, **kwargs: object) -> EpisodeLoss:
            nan = torch.tensor(math.nan, requires_grad=True)
            zero = torch.tensor(0.0)
            return EpisodeLoss(total=nan, span_terms=[nan], proto_terms=[zero], margin_terms=[zero])

        monkeypatch.setattr(trainer_module, "episode_loss", broken)
        with pytest.raises(NonFiniteLossError) as exc_info:
            train(_data(), _train_config(), _encoder_config())
        assert exc_info.value.report is not None
        assert exc_info.value.report.step == 1


class TestDropWords:
    """Tests for per-episode word dropout."""

    def test_zero_rate_is_identity(self) -> None:
        """Rate 0 returns the episode untouched."""
        episode = _data(1).episodes[0]
        assert drop_words(episode, 0.0, random.Random(0)) is episode

    def test_replacement_is_consistent_within_episode(self) -> None:
        """A dropped word gets one replacement everywhere; spans stay put."""
        episode = _data(1).episodes[0]
        dropped = drop_words(episode, 0.5, random.Random(3))
        mapping: dict[str, set[str]] = {}
        for before, after in zip(
            (*episode.support, *episode.query), (*dropped.support, *dropped.query), strict=True
        ):
            assert before.mentions == after.mentions
            assert before.distractors == after.distractors
            for old, new in zip(before.tokens, after.tokens, strict=True):
                mapping.setdefault(old, set()).add(new)
        assert all(len(news) == 1 for news in mapping.values())
        changed = {old for old, news in mapping.items() if news != {old}}
        assert changed
        assert changed != set(mapping)

    def test_fresh_replacements_each_call(self) -> None:
        """Successive draws pick new replacement words."""
        episode = _data(1).episodes[0]
        rng = random.Random(0)
        first = drop_words(episode, 0.99, rng)
        second = drop_words(episode, 0.99, rng)
        assert first.support[0].tokens != second.support[0].tokens

    def test_rate_validated(self) -> None:
        """A dropout rate of 1 would erase every word and is rejected."""
        with pytest.raises(ValidationError):
            _train_config(word_dropout=1.0)
