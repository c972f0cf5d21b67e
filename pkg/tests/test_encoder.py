"""Tests for the vocabulary and the token encoder."""

import pytest
import torch
from torch.func import functional_call

from src.spanproto.domain.model_config import EncoderConfig
from src.spanproto.domain.vocabulary import Vocabulary
from src.spanproto.ml.encoder import (
    EmptySentenceError,
    SequenceTooLongError,
    TokenEncoder,
    encode,
    sinusoidal_positions,
)

TOKENS = ("the", "river", "flows", "past", "town", ".")


def _encoder(mixing_layers: int = 1, max_length: int = 16, dim: int = 6) -> TokenEncoder:
    torch.manual_seed(0)
    config = EncoderConfig(
        embedding_dim=dim,
        max_length=max_length,
        mixing_layers=mixing_layers,
        vocabulary=Vocabulary(tokens=TOKENS, unknown_buckets=4),
        dtype="float64",
    )
    return TokenEncoder(config).to(torch.float64)


class TestVocabulary:
    """Tests for Vocabulary."""

    def test_build_orders_by_first_occurrence(self) -> None:
        """Known tokens keep corpus order."""
        vocabulary = Vocabulary.build(["b", "a", "b", "c", "a"], min_count=1)
        assert vocabulary.tokens == ("b", "a", "c")
        assert vocabulary.lookup("a") == 1

    def test_min_count_drops_rare_tokens(self) -> None:
        """Tokens below min_count go to the unknown buckets."""
        vocabulary = Vocabulary.build(["x", "x", "y"], min_count=2, unknown_buckets=8)
        assert vocabulary.tokens == ("x",)
        assert not vocabulary.is_known("y")
        assert vocabulary.size == 9

    def test_unknown_token_bucket_is_stable(self) -> None:
        """An unseen token always maps to the same bucket row."""
        vocabulary = Vocabulary(tokens=TOKENS, unknown_buckets=4)
        row = vocabulary.lookup("zebra")
        assert len(TOKENS) <= row < vocabulary.size
        assert vocabulary.lookup("zebra") == row

    def test_single_bucket_is_plain_unk(self) -> None:
        """With one bucket every unknown token shares one row."""
        vocabulary = Vocabulary(tokens=TOKENS, unknown_buckets=1)
        assert vocabulary.lookup("foo") == vocabulary.lookup("bar") == len(TOKENS)


class TestSinusoidalPositions:
    """Tests for the position table."""

    @pytest.mark.parametrize("dim", [4, 5])
    def test_shape_and_first_row(self, dim: int) -> None:
        """Row 0 alternates sin(0)=0 and cos(0)=1."""
        table = sinusoidal_positions(10, dim)
        assert table.shape == (10, dim)
        assert table[0, 0] == 0.0
        assert table[0, 1] == 1.0


class TestEncode:
    """Tests for encode."""

    def test_output_shape(self) -> None:
        """H has one row of size h per token."""
        encoded = encode(["the", "river", "flows"], _encoder())
        assert encoded.hidden.shape == (3, 6)
        assert encoded.length == 3
        assert encoded.dim == 6

    def test_deterministic(self) -> None:
        """Encoding the same tokens twice gives identical embeddings."""
        encoder = _encoder()
        first = encode(TOKENS, encoder).hidden
        second = encode(TOKENS, encoder).hidden
        assert torch.equal(first, second)

    def test_token_change_without_mixing_is_local(self) -> None:
        """Without mixing layers a token only affects its own row."""
        encoder = _encoder(mixing_layers=0)
        first = encode(["the", "river", "flows"], encoder).hidden
        second = encode(["the", "town", "flows"], encoder).hidden
        assert not torch.allclose(first[1], second[1])
        assert torch.equal(first[0], second[0])
        assert torch.equal(first[2], second[2])

    def test_mixing_layers_spread_context(self) -> None:
        """With mixing a token change reaches its neighbours."""
        encoder = _encoder(mixing_layers=1)
        first = encode(["the", "river", "flows"], encoder).hidden
        second = encode(["the", "town", "flows"], encoder).hidden
        assert not torch.allclose(first[0], second[0])

    def test_position_matters(self) -> None:
        """The same token at different positions gets different rows."""
        hidden = encode(["the", "the"], _encoder(mixing_layers=0)).hidden
        assert not torch.allclose(hidden[0], hidden[1])

    def test_too_long(self) -> None:
        """Sentences longer than max_length are rejected."""
        with pytest.raises(SequenceTooLongError, match="max length is 4"):
            encode(["the"] * 5, _encoder(max_length=4))

    def test_empty(self) -> None:
        """Zero tokens cannot be encoded."""
        with pytest.raises(EmptySentenceError):
            encode([], _encoder())

    def test_gradients_match_finite_differences(self) -> None:
        """Analytic gradients of H w.r.t. the embedding table are correct."""
        encoder = _encoder(dim=4)
        ids = encoder.token_ids(["the", "river", "flows", "zebra"])
        weight = encoder.embedding.weight.detach().clone().requires_grad_(True)

        def hidden(table: torch.Tensor) -> torch.Tensor:
            return functional_call(encoder, {"embedding.weight": table}, (ids,))

        assert torch.autograd.gradcheck(hidden, (weight,), eps=1e-5, rtol=1e-4, atol=1e-6)

    def test_rows_have_fixed_norm(self) -> None:
        """Every output row has norm output_norm, whatever the token."""
        encoder = _encoder()
        hidden = encode([*TOKENS, "zebra"], encoder).hidden
        norms = torch.linalg.vector_norm(hidden, dim=-1)
        assert torch.allclose(norms, torch.full_like(norms, encoder.config.output_norm))

    def test_unscaled_output(self) -> None:
        """With output_norm None the rows keep their own lengths."""
        torch.manual_seed(0)
        config = EncoderConfig(
            embedding_dim=6,
            max_length=16,
            vocabulary=Vocabulary(tokens=TOKENS, unknown_buckets=4),
            output_norm=None,
            dtype="float64",
        )
        hidden = encode(TOKENS, TokenEncoder(config).to(torch.float64)).hidden
        norms = torch.linalg.vector_norm(hidden, dim=-1)
        assert not torch.allclose(norms, norms[0].expand_as(norms))
