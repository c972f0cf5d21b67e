"""Pydantic models for training step reports and evaluation reports."""

from pydantic import BaseModel, Field


class EpisodeLossReport(BaseModel):
    """Loss terms of one episode within a training step.

    ``span_loss``, ``proto_loss`` and ``margin_loss`` are the episode sums
    (L_span_eps, L_proto_eps, L_mrg_eps); ``total`` is their assembled
    combination for this episode.
    """

    episode_index: int = Field(ge=0)
    span_loss: float
    proto_loss: float
    margin_loss: float
    support_size: int = Field(ge=1)
    query_size: int = Field(ge=1)
    total: float
    false_positive_counts: list[int] = Field(
        default_factory=list,
        description="|M_q^-| for each query sentence",
    )


class StepReport(BaseModel):
    """Everything one optimizer step produced."""

    step: int = Field(ge=1)
    lam: float = Field(description="Classifier loss weight λ")
    learning_rate: float = Field(ge=0)
    episodes: list[EpisodeLossReport]
    total: float = Field(description="Mean of the episode totals")

    def to_log_line(self) -> dict[str, object]:
        """Flat form written to the JSONL training log."""
        return self.model_dump()


class ErrorBreakdown(BaseModel):
    """Split of false positives into boundary errors and type errors."""

    false_positives: int = Field(ge=0)
    fp_span_count: int = Field(ge=0)
    fp_type_count: int = Field(ge=0)
    fp_span_pct: float = Field(ge=0, le=100)
    fp_type_pct: float = Field(ge=0, le=100)
    no_false_positives: bool = False


class PRF(BaseModel):
    """Precision, recall and F1 with the 0/0 = 0 convention."""

    predicted: int = Field(ge=0)
    gold: int = Field(ge=0)
    correct: int = Field(ge=0)
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, predicted: int, gold: int, correct: int) -> "PRF":
        """Compute the scores from raw counts."""
        precision = correct / predicted if predicted else 0.0
        recall = correct / gold if gold else 0.0
        denom = precision + recall
        f1 = 2 * precision * recall / denom if denom else 0.0
        return cls(
            predicted=predicted,
            gold=gold,
            correct=correct,
            precision=precision,
            recall=recall,
            f1=f1,
        )


class EpisodeEvalRow(BaseModel):
    """Per-episode scores."""

    episode_index: int = Field(ge=0)
    scores: PRF
    rejected: int = Field(ge=0)


class EvalReport(BaseModel):
    """Result of a two-stage evaluation run."""

    threshold: float
    radius: float
    micro: PRF
    macro_f1: float = Field(description="Mean of per-episode F1")
    span_detection: PRF = Field(description="Class-agnostic extractor scores")
    errors: ErrorBreakdown
    rejected_count: int = Field(ge=0)
    distractor_proposals: int = Field(
        ge=0,
        description="Extractor proposals that exactly hit an out-of-episode mention",
    )
    distractor_rejection_rate: float | None = Field(
        default=None,
        description="Share of those proposals the classifier rejected",
    )
    episodes: list[EpisodeEvalRow] = Field(default_factory=list)

    @property
    def precision(self) -> float:
        return self.micro.precision

    @property
    def recall(self) -> float:
        return self.micro.recall

    @property
    def f1(self) -> float:
        return self.micro.f1
