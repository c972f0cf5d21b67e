"""Top-level run configuration: every component config plus paths.

A RunConfig can be loaded from a JSON file and then overridden by
command-line flags. Overrides are dotted paths (``train.decode.threshold``)
merged into the file values and re-validated, so component invariants
are checked after overriding.
"""

import hashlib
import itertools
import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field

from src.spanproto.domain.generator_config import GeneratorConfig
from src.spanproto.domain.model_config import EncoderConfig
from src.spanproto.domain.training_config import TrainConfig


class RunConfig(BaseModel):
    """Everything needed to reproduce a run."""

    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    train_file: Path | None = None
    eval_file: Path | None = None
    run_root: Path | None = None

    @classmethod
    def from_file(cls, path: Path | str) -> "RunConfig":
        """Load a RunConfig from a JSON file."""
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        """Apply dotted-path overrides and re-validate.

        ``None`` values are ignored so unset flags keep the current value.
        """
        data = self.model_dump(mode="json")
        for dotted, value in overrides.items():
            if value is None:
                continue
            target = data
            *parents, leaf = dotted.split(".")
            for key in parents:
                target = target.setdefault(key, {})
            target[leaf] = value
        return RunConfig.model_validate(data)


def expand_grid(grid: dict[str, list[Any]]) -> list[dict[str, Any]]:
    """Cartesian product of a ``{dotted path: [values]}`` grid, in key order."""
    if not grid:
        return [{}]
    keys = list(grid)
    return [dict(zip(keys, values, strict=True)) for values in itertools.product(*grid.values())]


def file_digest(path: Path) -> str:
    """SHA-256 of a file's bytes."""
    return hashlib.sha256(path.read_bytes()).hexdigest()


def input_digests(paths: Sequence[Path | str]) -> dict[str, str]:
    """SHA-256 of every input file, keyed by path."""
    return {str(p): file_digest(Path(p)) for p in paths}


def config_echo(config: RunConfig, inputs: list[Path], extra: dict[str, Any] | None = None) -> str:
    """JSON document that pins a run: full config plus input file hashes."""
    document = {
        "config": config.model_dump(mode="json"),
        "inputs": input_digests(inputs),
        **(extra or {}),
    }
    return json.dumps(document, indent=2, sort_keys=True) + "\n"
