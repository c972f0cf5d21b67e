"""Synthetic N-way K-shot episode generation.

Builds desk-scale episodes from a type inventory, per-type lexicons and
sentence templates. Train, dev and test splits draw from disjoint type
pools: in ``intra`` mode whole coarse groups are held out, in ``inter``
mode every coarse group contributes fine types to every split.

Generation is a pure function of ``(config, seed)``.
"""

import logging
import random
import zlib

from src.spanproto.data.synthetic_types import ENTITY_SLOT, SYLLABLES
from src.spanproto.domain.episode import (
    Episode,
    EpisodeDataset,
    LabeledSentence,
    Mention,
    Span,
    Split,
)
from src.spanproto.domain.generator_config import GeneratorConfig

logger = logging.getLogger(__name__)

# Share of each pool held out for dev and for test
HELD_OUT_FRACTION = 0.2


class GeneratorConfigError(Exception):
    """Raised when a generator config cannot produce the requested episodes."""


def _split_sorted(items: list[str]) -> dict[Split, list[str]]:
    """Partition sorted items into train/dev/test, tail first to test."""
    n = len(items)
    if n < 3:
        return {Split.TRAIN: items, Split.DEV: [], Split.TEST: []}
    held = max(1, round(HELD_OUT_FRACTION * n))
    return {
        Split.TRAIN: items[: n - 2 * held],
        Split.DEV: items[n - 2 * held : n - held],
        Split.TEST: items[n - held :],
    }


def split_type_pools(config: GeneratorConfig) -> dict[Split, list[str]]:
    """Assign every fine type to exactly one split.

    The assignment depends only on the type inventory and the mode, so
    separately generated splits never share a type.
    """
    pools: dict[Split, list[str]] = {split: [] for split in Split}
    if config.mode == "intra":
        by_group = _split_sorted(sorted(config.type_groups))
        for split, groups in by_group.items():
            for group in groups:
                pools[split].extend(sorted(config.type_groups[group]))
    else:
        for group in sorted(config.type_groups):
            for split, types in _split_sorted(sorted(config.type_groups[group])).items():
                pools[split].extend(types)
    return pools


def build_lexicon(type_name: str, size: int) -> tuple[str, ...]:
    """Pseudo-word entity phrases for a type, seeded by its name."""
    rng = random.Random(zlib.crc32(type_name.encode("utf-8")))
    phrases: list[str] = []
    seen: set[str] = set()
    while len(phrases) < size:
        words = [
            "".join(rng.choice(SYLLABLES) for _ in range(rng.randint(2, 3)))
            for _ in range(rng.randint(1, 3))
        ]
        phrase = " ".join(words)
        if phrase not in seen:
            seen.add(phrase)
            phrases.append(phrase)
    return tuple(phrases)


class SyntheticEpisodeGenerator:
    """Samples episodes for one split of a GeneratorConfig."""

    def __init__(self, config: GeneratorConfig, seed: int) -> None:
        self._config = config
        self._rng = random.Random(seed)
        self._pools = split_type_pools(config)
        self._pool = self._pools[config.split]
        self._lexicons = {
            t: config.lexicons.get(t) or build_lexicon(t, config.lexicon_size)
            for t in config.all_types()
        }
        self._episode_heads: dict[str, str | None] = {}
        self._templates: dict[int, list[str]] = {}
        for template in config.templates:
            slots = template.split().count(ENTITY_SLOT)
            self._templates.setdefault(slots, []).append(template)
        self._validate()

    def _validate(self) -> None:
        config = self._config
        if config.n_ways > len(self._pool):
            raise GeneratorConfigError(
                f"n_ways={config.n_ways} exceeds the {len(self._pool)} types "
                f"available to the {config.split.value} split in {config.mode} mode"
            )
        for type_name in self._pool:
            if config.k_shots > len(self._lexicons[type_name]):
                raise GeneratorConfigError(
                    f"k_shots={config.k_shots} exceeds the lexicon size "
                    f"({len(self._lexicons[type_name])}) of {type_name!r}"
                )
        needed = config.max_query_mentions + (1 if config.distractor_probability > 0 else 0)
        for slots in range(1, needed + 1):
            if slots not in self._templates:
                raise GeneratorConfigError(f"no template with {slots} entity slot(s)")

    def _render(
        self,
        fillers: list[tuple[str, str]],
    ) -> tuple[tuple[str, ...], list[Mention]]:
        """Fill a template with ``(type, phrase)`` pairs, in slot order."""
        template = self._rng.choice(self._templates[len(fillers)])
        tokens: list[str] = []
        mentions: list[Mention] = []
        remaining = iter(fillers)
        for word in template.split():
            if word != ENTITY_SLOT:
                tokens.append(word)
                continue
            type_name, phrase = next(remaining)
            start = len(tokens)
            tokens.extend(phrase.split())
            if head := self._head(type_name):
                tokens.append(head)
            mentions.append(Mention(span=Span(start=start, end=len(tokens) - 1), type=type_name))
        return tuple(tokens), mentions

    def _head(self, type_name: str) -> str | None:
        """The head word ``type_name`` uses in the current episode."""
        if type_name not in self._episode_heads:
            heads = self._config.heads.get(type_name)
            self._episode_heads[type_name] = self._rng.choice(heads) if heads else None
        return self._episode_heads[type_name]

    def _support_set(self, types: list[str]) -> list[LabeledSentence]:
        """Exactly K mentions per type, packed into multi-slot template sentences."""
        fillers = [
            (type_name, phrase)
            for type_name in types
            for phrase in self._rng.sample(self._lexicons[type_name], self._config.k_shots)
        ]
        self._rng.shuffle(fillers)
        sentences = []
        while fillers:
            size = min(len(fillers), self._rng.randint(1, self._config.max_query_mentions))
            chunk, fillers = fillers[:size], fillers[size:]
            tokens, mentions = self._render(chunk)
            sentences.append(LabeledSentence(tokens=tokens, mentions=tuple(mentions)))
        return sentences

    def _distractor_types(self, types: list[str]) -> list[str]:
        inside = [t for t in self._pool if t not in types]
        if inside:
            return inside
        return [t for t in self._config.all_types() if t not in types]

    def _query_sentence(self, types: list[str]) -> LabeledSentence:
        config = self._config
        count = self._rng.randint(1, config.max_query_mentions)
        fillers = []
        for _ in range(count):
            type_name = self._rng.choice(types)
            fillers.append((type_name, self._rng.choice(self._lexicons[type_name])))
        distractor_pool = self._distractor_types(types)
        with_distractor = bool(distractor_pool) and (
            self._rng.random() < config.distractor_probability
        )
        if with_distractor:
            type_name = self._rng.choice(distractor_pool)
            fillers.append((type_name, self._rng.choice(self._lexicons[type_name])))
            self._rng.shuffle(fillers)
        tokens, mentions = self._render(fillers)
        target = set(types)
        return LabeledSentence(
            tokens=tokens,
            mentions=tuple(m for m in mentions if m.type in target),
            distractors=tuple(m for m in mentions if m.type not in target),
        )

    def episode(self) -> Episode:
        """Sample one episode."""
        types = self._rng.sample(self._pool, self._config.n_ways)
        self._episode_heads = {}
        support = self._support_set(types)
        query = [self._query_sentence(types) for _ in range(self._config.query_count)]
        return Episode(types=tuple(types), support=tuple(support), query=tuple(query))

    def dataset(self) -> EpisodeDataset:
        """Sample ``config.episodes`` episodes."""
        episodes = tuple(self.episode() for _ in range(self._config.episodes))
        return EpisodeDataset(episodes=episodes, split=self._config.split)


def generate_synthetic(config: GeneratorConfig, seed: int) -> EpisodeDataset:
    """Generate a synthetic episode dataset.

    Args:
        config: Ways, shots, counts, inventory and split settings.
        seed: Random seed; equal inputs give equal datasets.

    Returns:
        An EpisodeDataset for ``config.split``.

    Raises:
        GeneratorConfigError: If N exceeds the split's type pool, K exceeds
            a lexicon, or the templates lack the needed slot counts.
    """
    dataset = SyntheticEpisodeGenerator(config, seed).dataset()
    logger.info(
        "Generated %d %s episodes (%d-way %d-shot, %s mode, seed=%d)",
        len(dataset),
        config.split.value,
        config.n_ways,
        config.k_shots,
        config.mode,
        seed,
    )
    return dataset
