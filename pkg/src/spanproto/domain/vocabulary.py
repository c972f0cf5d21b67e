"""Token vocabulary with hashed buckets for unknown tokens."""

import zlib
from collections import Counter
from collections.abc import Iterable

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr


class Vocabulary(BaseModel):
    """Token-to-index map built from training data.

    Indices ``0 .. len(tokens) - 1`` belong to known tokens. Any other
    token is mapped to one of ``unknown_buckets`` extra rows by a stable
    crc32 hash, so the same unseen token always lands in the same row.
    With ``unknown_buckets=1`` this is the classic single UNK entry.
    """

    model_config = ConfigDict(frozen=True)

    tokens: tuple[str, ...] = ()
    unknown_buckets: int = Field(default=256, ge=1)
    _index: dict[str, int] = PrivateAttr(default_factory=dict)

    @classmethod
    def build(
        cls,
        corpus: Iterable[str],
        *,
        min_count: int = 1,
        unknown_buckets: int = 256,
    ) -> "Vocabulary":
        """Collect tokens seen at least ``min_count`` times.

        Tokens are ordered by first occurrence so the result depends only
        on the corpus order, not on hash seeds.
        """
        counts = Counter(corpus)
        kept = [token for token, count in counts.items() if count >= min_count]
        return cls(tokens=tuple(kept), unknown_buckets=unknown_buckets)

    def model_post_init(self, __context: object) -> None:
        self._index = {token: i for i, token in enumerate(self.tokens)}

    @property
    def size(self) -> int:
        """Total embedding rows: known tokens plus unknown buckets."""
        return len(self.tokens) + self.unknown_buckets

    def lookup(self, token: str) -> int:
        """Return the embedding row for ``token``."""
        index = self._index.get(token)
        if index is not None:
            return index
        bucket = zlib.crc32(token.encode("utf-8")) % self.unknown_buckets
        return len(self.tokens) + bucket

    def is_known(self, token: str) -> bool:
        """Whether ``token`` has its own row."""
        return token in self._index

    def encode(self, tokens: Iterable[str]) -> list[int]:
        """Map a token sequence to embedding rows."""
        return [self.lookup(token) for token in tokens]
