"""Pydantic models for few-shot NER episodes.

An episode is one N-way K-shot task: a list of target entity types, a
support set of labeled sentences used to build type prototypes, and a
query set the model is asked to recognize. Spans use 0-based inclusive
token indices, so a single-token mention at position 3 is ``(3, 3)``.

All models are frozen; they are safe to share between threads and
processes once constructed.
"""

from enum import Enum
from typing import Self

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Span(BaseModel):
    """Contiguous token range with 0-based inclusive boundaries."""

    model_config = ConfigDict(frozen=True)

    start: int = Field(ge=0, description="Index of the first token (inclusive)")
    end: int = Field(ge=0, description="Index of the last token (inclusive)")

    @model_validator(mode="after")
    def start_not_after_end(self) -> Self:
        """Reject spans whose start lies after their end."""
        if self.start > self.end:
            raise ValueError(f"span start {self.start} is after end {self.end}")
        return self

    @property
    def width(self) -> int:
        """Number of tokens covered by the span."""
        return self.end - self.start + 1

    def as_pair(self) -> tuple[int, int]:
        """Return the span as a plain ``(start, end)`` tuple."""
        return (self.start, self.end)

    def fits(self, length: int) -> bool:
        """Whether the span lies inside a sentence of ``length`` tokens."""
        return self.end < length

    def __str__(self) -> str:
        return f"({self.start}, {self.end})"


class Mention(BaseModel):
    """A typed entity mention inside a sentence."""

    model_config = ConfigDict(frozen=True)

    span: Span
    type: str = Field(min_length=1, description="Entity type name")

    def key(self) -> tuple[int, int, str]:
        """Hashable ``(start, end, type)`` identity used for exact matching."""
        return (self.span.start, self.span.end, self.type)


class LabeledSentence(BaseModel):
    """Pre-tokenized sentence with its gold mention spans.

    ``mentions`` may nest or overlap. ``distractors`` holds mentions of
    types outside the episode that are present in the text but are NOT
    gold for the episode; the synthetic generator records them so that
    false-positive behavior can be measured. They never count as gold.
    """

    model_config = ConfigDict(frozen=True)

    tokens: tuple[str, ...] = Field(min_length=1)
    mentions: tuple[Mention, ...] = ()
    distractors: tuple[Mention, ...] = ()

    @model_validator(mode="after")
    def validate_mentions(self) -> Self:
        """Check span bounds and reject duplicate ``(span, type)`` pairs."""
        length = len(self.tokens)
        for field_name in ("mentions", "distractors"):
            seen: set[tuple[int, int, str]] = set()
            for mention in getattr(self, field_name):
                if not mention.span.fits(length):
                    raise ValueError(
                        f"{field_name}: span {mention.span} exceeds sentence "
                        f"length {length}"
                    )
                if mention.key() in seen:
                    raise ValueError(
                        f"{field_name}: duplicate mention {mention.span} {mention.type!r}"
                    )
                seen.add(mention.key())
        return self

    @property
    def length(self) -> int:
        """Token count L."""
        return len(self.tokens)

    def gold_spans(self) -> set[tuple[int, int]]:
        """Boundaries of all gold mentions, types dropped."""
        return {m.span.as_pair() for m in self.mentions}

    def gold_keys(self) -> set[tuple[int, int, str]]:
        """Gold mentions as ``(start, end, type)`` triples."""
        return {m.key() for m in self.mentions}

    def surface(self, span: Span) -> str:
        """Return the text covered by ``span``."""
        return " ".join(self.tokens[span.start : span.end + 1])


class Episode(BaseModel):
    """One N-way K-shot task with its support and query sets."""

    model_config = ConfigDict(frozen=True)

    types: tuple[str, ...] = Field(min_length=1)
    support: tuple[LabeledSentence, ...] = Field(min_length=1)
    query: tuple[LabeledSentence, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def validate_types(self) -> Self:
        """Check type declarations against the mentions that use them."""
        if len(set(self.types)) != len(self.types):
            raise ValueError(f"types: duplicate type names in {list(self.types)}")
        declared = set(self.types)
        for set_name in ("support", "query"):
            for sentence in getattr(self, set_name):
                for mention in sentence.mentions:
                    if mention.type not in declared:
                        raise ValueError(
                            f"{set_name}: mention type {mention.type!r} is not "
                            f"declared in types"
                        )
        supported = {m.type for s in self.support for m in s.mentions}
        missing = [t for t in self.types if t not in supported]
        if missing:
            raise ValueError(f"support: no support mention for types {missing}")
        return self

    @property
    def n_ways(self) -> int:
        """Number of target types N."""
        return len(self.types)

    def shot_counts(self) -> dict[str, int]:
        """Support mention count K_t per type, in declared type order."""
        counts = dict.fromkeys(self.types, 0)
        for sentence in self.support:
            for mention in sentence.mentions:
                counts[mention.type] += 1
        return counts


class Split(str, Enum):
    """Dataset split tag."""

    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


class EpisodeDataset(BaseModel):
    """Ordered collection of episodes belonging to one split."""

    model_config = ConfigDict(frozen=True)

    episodes: tuple[Episode, ...] = ()
    split: Split = Split.TRAIN
    warnings: tuple[str, ...] = Field(
        default=(),
        description="Non-fatal issues found while loading (e.g. empty file)",
        exclude=True,
    )

    def __len__(self) -> int:
        return len(self.episodes)

    @property
    def is_empty(self) -> bool:
        """Whether the dataset holds no episodes."""
        return not self.episodes

    def types(self) -> set[str]:
        """All type names declared by any episode."""
        return {t for episode in self.episodes for t in episode.types}

    def vocabulary_tokens(self) -> list[str]:
        """Every token occurrence of every sentence, in dataset order."""
        return [
            token
            for episode in self.episodes
            for sentence in (*episode.support, *episode.query)
            for token in sentence.tokens
        ]
