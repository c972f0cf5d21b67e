"""Configuration model for the synthetic episode generator."""

from typing import Literal, Self

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.spanproto.data.synthetic_types import TEMPLATES, TYPE_INVENTORY
from src.spanproto.domain.episode import Split


def _default_type_groups() -> dict[str, tuple[str, ...]]:
    return {group: tuple(fine) for group, fine in TYPE_INVENTORY.items()}


def _default_heads() -> dict[str, tuple[str, ...]]:
    return {fine: heads for group in TYPE_INVENTORY.values() for fine, heads in group.items()}


class GeneratorConfig(BaseModel):
    """Parameters for ``generate_synthetic``.

    ``lexicons`` maps a type name to its entity phrases. When a type has
    no explicit lexicon the generator builds ``lexicon_size`` pseudo-word
    phrases for it, seeded by the type name so every split sees the same
    lexicon. ``heads`` maps a type to the words its mentions may end
    with; one is picked per episode. A type without heads gets bare phrases.
    """

    model_config = ConfigDict(frozen=True)

    n_ways: int = Field(default=5, ge=1, description="Types per episode (N)")
    k_shots: int = Field(default=1, ge=1, description="Support mentions per type (K)")
    query_count: int = Field(default=5, ge=1, description="Query sentences per episode")
    episodes: int = Field(default=50, ge=1, description="Episodes to generate")
    split: Split = Split.TRAIN
    mode: Literal["intra", "inter"] = Field(
        default="inter",
        description=(
            "intra: splits use disjoint coarse groups; "
            "inter: splits share coarse groups but use disjoint fine types"
        ),
    )
    distractor_probability: float = Field(
        default=0.3,
        ge=0.0,
        le=1.0,
        description="Chance that a query sentence carries an out-of-episode mention",
    )
    max_query_mentions: int = Field(
        default=2,
        ge=1,
        le=3,
        description="Upper bound on target mentions per sentence, support and query alike",
    )
    type_groups: dict[str, tuple[str, ...]] = Field(default_factory=_default_type_groups)
    heads: dict[str, tuple[str, ...]] = Field(default_factory=_default_heads)
    lexicons: dict[str, tuple[str, ...]] = Field(default_factory=dict)
    lexicon_size: int = Field(default=20, ge=1)
    templates: tuple[str, ...] = TEMPLATES

    @model_validator(mode="after")
    def validate_inventory(self) -> Self:
        """Every type referenced by heads or lexicons must belong to a group."""
        known = {t for types in self.type_groups.values() for t in types}
        unknown = (set(self.heads) | set(self.lexicons)) - known
        if unknown:
            raise ValueError(f"types not in any group: {sorted(unknown)}")
        if not self.type_groups:
            raise ValueError("type_groups must not be empty")
        return self

    def all_types(self) -> list[str]:
        """Every fine-grained type, grouped and sorted."""
        return [t for group in sorted(self.type_groups) for t in sorted(self.type_groups[group])]
