"""Tests for scoring, error analysis and two-stage evaluation."""

import pytest
import torch

from src.spanproto.domain.episode import EpisodeDataset
from src.spanproto.domain.generator_config import GeneratorConfig
from src.spanproto.domain.model_config import DecodeConfig, EncoderConfig, MarginConfig
from src.spanproto.domain.reports import PRF
from src.spanproto.ml.model import SpanProtoModel
from src.spanproto.services.evaluator import (
    error_analysis,
    evaluate,
    predict_episode,
    score_predictions,
)
from src.spanproto.services.synthetic_generator import generate_synthetic
from src.spanproto.services.trainer import build_vocabulary


def _data() -> EpisodeDataset:
    config = GeneratorConfig(n_ways=3, query_count=4, episodes=3, distractor_probability=1.0)
    return generate_synthetic(config, seed=2)


def _model(data: EpisodeDataset) -> SpanProtoModel:
    torch.manual_seed(0)
    return SpanProtoModel(build_vocabulary(data, EncoderConfig(embedding_dim=8)))


class TestPRF:
    """Tests for precision/recall/F1 counting."""

    def test_zero_over_zero(self) -> None:
        """No predictions and no gold give all zeros."""
        scores = PRF.from_counts(0, 0, 0)
        assert (scores.precision, scores.recall, scores.f1) == (0.0, 0.0, 0.0)


class TestScorePredictions:
    """Tests for micro scoring."""

    def test_one_extra_prediction(self) -> None:
        """One correct plus one wrong prediction: P = 0.5, R = 1, F1 = 2/3."""
        scores = score_predictions([{(0, 1, "PER"), (2, 2, "LOC")}], [{(0, 1, "PER")}])
        assert scores.precision == 0.5
        assert scores.recall == 1.0
        assert scores.f1 == pytest.approx(2 / 3)

    def test_everything_rejected(self) -> None:
        """No predictions give P = R = F1 = 0."""
        scores = score_predictions([set()], [{(0, 1, "PER")}])
        assert (scores.precision, scores.recall, scores.f1) == (0.0, 0.0, 0.0)

    def test_identity(self) -> None:
        """Predictions equal to gold give perfect scores."""
        gold = [{(0, 1, "PER"), (3, 3, "LOC")}, {(1, 2, "ORG")}]
        scores = score_predictions(gold, gold)
        assert (scores.precision, scores.recall, scores.f1) == (1.0, 1.0, 1.0)

    def test_off_by_one_is_not_a_match(self) -> None:
        """Boundaries must match exactly."""
        scores = score_predictions([{(0, 2, "PER")}], [{(0, 1, "PER")}])
        assert scores.correct == 0

    def test_micro_average_across_sentences(self) -> None:
        """Counts are pooled over sentences before dividing."""
        predictions = [{(0, 0, "A")}, {(0, 0, "A"), (1, 1, "A"), (2, 2, "A")}]
        gold = [{(0, 0, "A")}, {(5, 5, "A")}]
        scores = score_predictions(predictions, gold)
        assert scores.precision == pytest.approx(1 / 4)
        assert scores.recall == pytest.approx(1 / 2)


class TestErrorAnalysis:
    """Tests for the FP-Span / FP-Type split."""

    def test_one_of_each(self) -> None:
        """One boundary error and one type error split 50/50."""
        predictions = [{(0, 1, "PER"), (4, 4, "LOC"), (2, 2, "ORG")}]
        gold = [{(0, 1, "PER"), (2, 2, "LOC")}]
        breakdown = error_analysis(predictions, gold)
        assert breakdown.fp_span_pct == 50.0
        assert breakdown.fp_type_pct == 50.0
        assert breakdown.false_positives == 2

    def test_all_boundary_correct(self) -> None:
        """Only wrong types gives 0% FP-Span and 100% FP-Type."""
        breakdown = error_analysis([{(0, 1, "LOC")}], [{(0, 1, "PER")}])
        assert (breakdown.fp_span_pct, breakdown.fp_type_pct) == (0.0, 100.0)

    def test_off_by_one_is_span_error(self) -> None:
        """A boundary off by one token counts as FP-Span."""
        breakdown = error_analysis([{(0, 2, "PER")}], [{(0, 1, "PER")}])
        assert breakdown.fp_span_count == 1
        assert breakdown.fp_type_count == 0

    def test_no_false_positives(self) -> None:
        """Zero false positives is flagged and both shares are 0."""
        breakdown = error_analysis([{(0, 1, "PER")}], [{(0, 1, "PER")}])
        assert breakdown.no_false_positives
        assert (breakdown.fp_span_pct, breakdown.fp_type_pct) == (0.0, 0.0)

    def test_percentages_sum_to_hundred(self) -> None:
        """With any false positive the shares add up to 100."""
        predictions = [{(0, 0, "A"), (1, 1, "B"), (2, 3, "A")}, {(5, 5, "C")}]
        gold = [{(0, 0, "B")}, {(4, 5, "C")}]
        breakdown = error_analysis(predictions, gold)
        assert breakdown.fp_span_pct + breakdown.fp_type_pct == pytest.approx(100.0)


class TestEvaluate:
    """Tests for evaluate on an untrained model."""

    def test_every_decoded_span_is_accepted_or_rejected(self) -> None:
        """Accepted predictions plus rejections equal the decoded spans."""
        data = _data()
        report = evaluate(data, _model(data), DecodeConfig(threshold=0.5), MarginConfig(radius=1.0))
        assert report.micro.predicted + report.rejected_count == report.span_detection.predicted
        assert len(report.episodes) == 3

    def test_infinite_radius_never_lowers_recall(self) -> None:
        """Dropping rejection keeps every decoded span and cannot lower recall."""
        data = _data()
        model = _model(data)
        decode = DecodeConfig(threshold=0.5)
        strict = evaluate(data, model, decode, MarginConfig(radius=0.5))
        loose = evaluate(data, model, decode, MarginConfig(radius=1e9))
        assert loose.rejected_count == 0
        assert loose.recall >= strict.recall
        assert loose.micro.predicted >= strict.micro.predicted
        assert loose.span_detection == strict.span_detection

    def test_deterministic(self) -> None:
        """Evaluating twice gives identical reports."""
        data = _data()
        model = _model(data)
        first = evaluate(data, model, DecodeConfig(), MarginConfig())
        second = evaluate(data, model, DecodeConfig(), MarginConfig())
        assert first.model_dump() == second.model_dump()

    def test_distractor_rate_defined_only_with_proposals(self) -> None:
        """The unknown-type rejection rate exists only when distractors were proposed."""
        data = _data()
        report = evaluate(data, _model(data), DecodeConfig(threshold=0.5), MarginConfig())
        if report.distractor_proposals:
            assert 0.0 <= report.distractor_rejection_rate <= 1.0
        else:
            assert report.distractor_rejection_rate is None

    def test_macro_is_mean_of_episode_f1(self) -> None:
        """Macro F1 averages the per-episode rows."""
        data = _data()
        report = evaluate(data, _model(data), DecodeConfig(threshold=0.5), MarginConfig(radius=1e9))
        rows = [row.scores.f1 for row in report.episodes]
        assert report.macro_f1 == pytest.approx(sum(rows) / len(rows))

    def test_predict_episode_types_are_episode_types(self) -> None:
        """Accepted predictions only carry the episode's types."""
        data = _data()
        episode = data.episodes[0]
        prediction = predict_episode(
            _model(data), episode, DecodeConfig(threshold=0.5), MarginConfig(radius=1e9)
        )
        assert len(prediction.sentences) == len(episode.query)
        for sentence in prediction.sentences:
            assert {t for _, _, t in sentence.predictions} <= set(episode.types)
            assert not sentence.rejected
