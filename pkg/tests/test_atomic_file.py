"""Tests for atomic text writes."""

from pathlib import Path

import pytest

from src.spanproto.utils.atomic_file import write_text_atomic


class TestWriteTextAtomic:
    """Tests for write_text_atomic."""

    def test_replaces_existing_content(self, tmp_path: Path) -> None:
        """The target ends up with exactly the new text."""
        target = tmp_path / "out.json"
        target.write_text("old", encoding="utf-8")
        write_text_atomic(target, "new\n")
        assert target.read_text(encoding="utf-8") == "new\n"
        assert [p.name for p in tmp_path.iterdir()] == ["out.json"]

    def test_failed_replace_removes_temp_file(self, tmp_path: Path) -> None:
        """When the move fails the temporary file is cleaned up."""
        target = tmp_path / "taken"
        target.mkdir()
        (target / "child").write_text("x", encoding="utf-8")
        with pytest.raises(OSError):
            write_text_atomic(target, "text", prefix=".t_")
        assert not list(tmp_path.glob(".t_*"))

    def test_missing_directory(self, tmp_path: Path) -> None:
        """A missing parent directory raises OSError."""
        with pytest.raises(OSError):
            write_text_atomic(tmp_path / "nope" / "f.txt", "text")
