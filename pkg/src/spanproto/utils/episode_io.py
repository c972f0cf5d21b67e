"""Reader and writer for the normalized episode file format.

One JSON object per line, UTF-8::

    {"types": ["PER", "LOC"],
     "support": [{"tokens": ["Ada", "visited", "Rome"], "spans": [[0, 0, "PER"], [2, 2, "LOC"]]}],
     "query":   [{"tokens": [...], "spans": [...]}]}

Spans are ``[start, end, type]`` with 0-based inclusive indices. A
sentence may also carry ``"distractors"`` in the same shape: mentions of
types outside the episode that are present in the text but not gold.
The key is omitted when there are none.
"""

import json
import logging
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from src.spanproto.domain.episode import (
    Episode,
    EpisodeDataset,
    LabeledSentence,
    Mention,
    Span,
    Split,
)
from src.spanproto.utils.atomic_file import write_text_atomic

logger = logging.getLogger(__name__)


class EpisodeFormatError(Exception):
    """Base error for episode file problems."""


class EpisodeParseError(EpisodeFormatError):
    """Raised when a line is not a well-formed episode record."""

    def __init__(self, message: str, line_number: int) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EpisodeValidationError(EpisodeFormatError):
    """Raised when a well-formed record violates an episode invariant."""

    def __init__(self, message: str, episode_index: int, field: str) -> None:
        super().__init__(f"episode {episode_index}, field {field}: {message}")
        self.episode_index = episode_index
        self.field = field


class EpisodeWriteError(EpisodeFormatError):
    """Raised when an episode file cannot be written."""

    def __init__(self, message: str, path: Path) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


def _first_error_message(exc: ValidationError) -> str:
    error = exc.errors()[0]
    return str(error.get("msg", exc))


def _parse_mentions(raw: Any, where: str) -> list[Mention]:
    if not isinstance(raw, list):
        raise TypeError(f"{where} must be a list")
    mentions = []
    for item in raw:
        if not (isinstance(item, list) and len(item) == 3):
            raise TypeError(f"{where} entries must be [start, end, type]")
        start, end, type_name = item
        # bool is a subclass of int; JSON true/false are not indices
        indices_ok = all(isinstance(v, int) and not isinstance(v, bool) for v in (start, end))
        if not (indices_ok and isinstance(type_name, str)):
            raise TypeError(f"{where} entries must be [int, int, str]")
        mentions.append(Mention(span=Span(start=start, end=end), type=type_name))
    return mentions


def _parse_sentence(raw: Any, where: str) -> LabeledSentence:
    if not isinstance(raw, dict):
        raise TypeError(f"{where} must be an object")
    tokens = raw.get("tokens")
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise TypeError(f"{where}.tokens must be a list of strings")
    return LabeledSentence(
        tokens=tuple(tokens),
        mentions=tuple(_parse_mentions(raw.get("spans", []), f"{where}.spans")),
        distractors=tuple(_parse_mentions(raw.get("distractors", []), f"{where}.distractors")),
    )


def parse_episode_record(record: Any, episode_index: int) -> Episode:
    """Build an Episode from one decoded JSON record.

    Args:
        record: The decoded JSON object.
        episode_index: 0-based position of the record, used in errors.

    Returns:
        The validated Episode.

    Raises:
        EpisodeValidationError: If any structural or invariant check fails.
    """
    if not isinstance(record, dict):
        raise EpisodeValidationError("record must be a JSON object", episode_index, "<root>")

    types = record.get("types")
    if not isinstance(types, list) or not all(isinstance(t, str) for t in types):
        raise EpisodeValidationError("must be a list of strings", episode_index, "types")

    sentences: dict[str, list[LabeledSentence]] = {}
    for set_name in ("support", "query"):
        raw_set = record.get(set_name)
        if not isinstance(raw_set, list):
            raise EpisodeValidationError("must be a list", episode_index, set_name)
        parsed = []
        for i, raw_sentence in enumerate(raw_set):
            where = f"{set_name}[{i}]"
            try:
                parsed.append(_parse_sentence(raw_sentence, where))
            except TypeError as exc:
                raise EpisodeValidationError(str(exc), episode_index, where) from exc
            except ValidationError as exc:
                raise EpisodeValidationError(
                    _first_error_message(exc), episode_index, where
                ) from exc
        sentences[set_name] = parsed

    try:
        return Episode(
            types=tuple(types),
            support=tuple(sentences["support"]),
            query=tuple(sentences["query"]),
        )
    except ValidationError as exc:
        message = _first_error_message(exc)
        error = exc.errors()[0]
        if error.get("loc"):
            field = str(error["loc"][0])
        else:
            # model-level checks prefix their message with the field name
            field = message.removeprefix("Value error, ").split(":", 1)[0]
        raise EpisodeValidationError(message, episode_index, field) from exc


def parse_episode_lines(content: str, split: Split = Split.TRAIN) -> EpisodeDataset:
    """Parse the full text of an episode file.

    Blank lines are skipped; every other line must hold one record.

    Raises:
        EpisodeParseError: If a line is not valid JSON.
        EpisodeValidationError: If a record violates an invariant.
    """
    episodes: list[Episode] = []
    for line_number, line in enumerate(content.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EpisodeParseError(exc.msg, line_number) from exc
        episodes.append(parse_episode_record(record, len(episodes)))

    warnings: tuple[str, ...] = ()
    if not episodes:
        warnings = ("episode file contains no episodes",)
        logger.warning("Episode input is empty (split=%s)", split.value)
    return EpisodeDataset(episodes=tuple(episodes), split=split, warnings=warnings)


def decode_episode_bytes(data: bytes) -> str:
    """Decode episode file bytes as UTF-8, line by line.

    Raises:
        EpisodeParseError: Naming the first line that is not valid UTF-8.
    """
    lines = []
    for line_number, raw in enumerate(data.split(b"\n"), start=1):
        try:
            lines.append(raw.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise EpisodeParseError(f"invalid UTF-8: {exc.reason}", line_number) from exc
    return "\n".join(lines)


def read_episodes(path: Path | str, split: Split = Split.TRAIN) -> EpisodeDataset:
    """Read an episode file from disk.

    Args:
        path: Path to the JSONL episode file.
        split: Split tag to attach to the dataset. Files do not record
            their split, so this is always the caller's choice.

    Returns:
        Episodes in file order.

    Raises:
        FileNotFoundError: If the file doesn't exist.
        EpisodeParseError: If a line is not valid UTF-8 or JSON.
        EpisodeValidationError: If a record violates an invariant.
    """
    path = Path(path)
    dataset = parse_episode_lines(decode_episode_bytes(path.read_bytes()), split)
    logger.debug("Read %d episodes from %s", len(dataset), path)
    return dataset


def _sentence_record(sentence: LabeledSentence) -> dict[str, Any]:
    record: dict[str, Any] = {
        "tokens": list(sentence.tokens),
        "spans": [[m.span.start, m.span.end, m.type] for m in sentence.mentions],
    }
    if sentence.distractors:
        record["distractors"] = [
            [m.span.start, m.span.end, m.type] for m in sentence.distractors
        ]
    return record


def episode_to_record(episode: Episode) -> dict[str, Any]:
    """Convert an Episode to its JSON record."""
    return {
        "types": list(episode.types),
        "support": [_sentence_record(s) for s in episode.support],
        "query": [_sentence_record(s) for s in episode.query],
    }


def serialize_episodes(dataset: EpisodeDataset) -> str:
    """Serialize a dataset to episode file text (one line per episode)."""
    lines = [
        json.dumps(episode_to_record(e), ensure_ascii=False, separators=(",", ":"))
        for e in dataset.episodes
    ]
    return "".join(line + "\n" for line in lines)


def write_episodes(dataset: EpisodeDataset, path: Path | str) -> None:
    """Write a dataset to disk atomically.

    The split tag is not part of the file format; readers supply it.

    Raises:
        EpisodeWriteError: If the file cannot be written.
    """
    path = Path(path)
    try:
        write_text_atomic(path, serialize_episodes(dataset), prefix=".episodes_")
    except OSError as exc:
        raise EpisodeWriteError(str(exc), path) from exc
    logger.debug("Wrote %d episodes to %s", len(dataset), path)
