"""Atomic text file writes."""

import contextlib
import os
import tempfile
from pathlib import Path


def write_text_atomic(path: Path, content: str, prefix: str = ".tmp_") -> None:
    """Write ``content`` to ``path`` so readers never see a partial file.

    The text goes to a temporary file in the target directory, which then
    replaces ``path`` with ``os.replace()``. The temporary file is removed
    on any failure.

    Raises:
        OSError: If the file cannot be created, written or moved.
    """
    fd, tmp_path = tempfile.mkstemp(dir=path.parent, prefix=prefix, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(content)
        os.replace(tmp_path, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp_path)
        raise
