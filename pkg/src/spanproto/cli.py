"""Command-line entry point: generate, train, eval and inspect.

Usage:
    spanproto generate --ways 5 --shots 1 --episodes 50 --seed 42 --mode inter --out data/
    spanproto train --train-file data/train.jsonl --eval-file data/test.jsonl
    spanproto train --train-file data/train.jsonl --seeds 12,21,42,87,100
    spanproto eval --checkpoint runs/<run>/checkpoints/step_002000.json --eval-file data/test.jsonl
    spanproto inspect --checkpoint <ckpt> --episodes-file data/test.jsonl --index 0 --dump-embeddings

Exit status is 0 when the requested pipeline completed, 1 on a runtime
failure and 2 on a usage error.
"""

import argparse
import json
import logging
import sys
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from datetime import UTC, datetime
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import torch
from pydantic import ValidationError

from src.spanproto.config import get_settings
from src.spanproto.domain.episode import Split
from src.spanproto.domain.generator_config import GeneratorConfig
from src.spanproto.domain.model_config import DecodeConfig, MarginConfig
from src.spanproto.domain.reports import EvalReport
from src.spanproto.domain.run_config import RunConfig, config_echo, expand_grid, input_digests
from src.spanproto.ml.encoder import EncoderError
from src.spanproto.ml.mention_classifier import MentionClassifierError
from src.spanproto.ml.span_extractor import SpanExtractorError
from src.spanproto.services.evaluator import evaluate
from src.spanproto.services.inspection import inspect_episode, write_inspection
from src.spanproto.services.synthetic_generator import GeneratorConfigError, generate_synthetic
from src.spanproto.services.trainer import Trainer, TrainingError
from src.spanproto.utils.checkpoint import CheckpointError, load_checkpoint
from src.spanproto.utils.episode_io import EpisodeFormatError, read_episodes, write_episodes

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# Errors that end a run with EXIT_FAILURE and a one-line message
RUNTIME_ERRORS: tuple[type[Exception], ...] = (
    CheckpointError,
    EncoderError,
    EpisodeFormatError,
    FileNotFoundError,
    GeneratorConfigError,
    MentionClassifierError,
    SpanExtractorError,
    TrainingError,
    ValidationError,
)


class UsageError(Exception):
    """Raised for argument combinations argparse cannot reject by itself."""


def _float_list(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def _int_list(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v.strip()]


def _base_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig.from_file(args.config) if args.config else RunConfig()


def _run_dir(root: Path, seed: int, tag: str = "") -> Path:
    stamp = datetime.now(UTC).strftime("%Y%m%dT%H%M%S%fZ")
    suffix = f"-{tag}" if tag else ""
    path = root / f"{stamp}-seed{seed}{suffix}"
    path.mkdir(parents=True, exist_ok=False)
    return path


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    """Write train/dev/test episode files for one generator config."""
    config = _base_config(args).with_overrides(
        {
            "generator.n_ways": args.ways,
            "generator.k_shots": args.shots,
            "generator.query_count": args.queries,
            "generator.mode": args.mode,
            "generator.distractor_probability": args.distractor_prob,
        }
    )
    out = Path(args.out) if args.out else get_settings().data_path
    out.mkdir(parents=True, exist_ok=True)
    counts = {
        Split.TRAIN: args.episodes or config.generator.episodes,
        Split.DEV: args.eval_episodes,
        Split.TEST: args.eval_episodes,
    }
    for offset, (split, episodes) in enumerate(counts.items()):
        split_config = GeneratorConfig.model_validate(
            {**config.generator.model_dump(), "split": split, "episodes": episodes}
        )
        dataset = generate_synthetic(split_config, args.seed + offset)
        path = out / f"{split.value}.jsonl"
        write_episodes(dataset, path)
        print(f"wrote {len(dataset)} {split.value} episodes to {path}")
    (out / "generate_config.json").write_text(
        config_echo(config, [], {"seed": args.seed, "counts": {s.value: n for s, n in counts.items()}}),
        encoding="utf-8",
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _train_overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {
        "train_file": args.train_file,
        "eval_file": args.eval_file,
        "run_root": args.run_root,
        "train.total_steps": args.steps,
        "train.pretrain_steps": args.pretrain_steps,
        "train.seed": args.seed,
        "train.episodes_per_step": args.episodes_per_step,
        "train.checkpoint_every": args.checkpoint_every,
        "train.decode.threshold": args.threshold,
        "train.margin.radius": args.radius,
        "train.margin.margin_loss": False if args.no_margin_loss else None,
        "train.optimizer.learning_rate": args.lr,
        "train.optimizer.warmup_fraction": args.warmup,
        "encoder.embedding_dim": args.embedding_dim,
        "encoder.mixing_layers": args.mixing_layers,
    }


def run_training(config: RunConfig, tag: str = "", tensorboard: bool = False) -> dict[str, Any]:
    """Train (and optionally evaluate) one configuration in its own run directory.

    Returns:
        A flat summary row: seed, final loss, run directory and eval scores.
    """
    if config.train_file is None:
        config = config.model_copy(
            update={"train_file": get_settings().data_path / "train.jsonl"}
        )
    train_file = Path(config.train_file)
    data = read_episodes(train_file, Split.TRAIN)
    root = Path(config.run_root) if config.run_root else get_settings().runs_path
    run_dir = _run_dir(root, config.train.seed, tag)

    inputs = [train_file] + ([Path(config.eval_file)] if config.eval_file else [])
    (run_dir / "config.json").write_text(
        config_echo(config, inputs, {"torch_version": torch.__version__}),
        encoding="utf-8",
    )
    logger.info(
        "Run %s: T=%d T'=%d theta=%s r=%s",
        run_dir,
        config.train.total_steps,
        config.train.pretrain_steps,
        config.train.decode.threshold,
        config.train.margin.radius,
    )

    result = Trainer(config.train, config.encoder, run_dir, tensorboard).train(data)
    final = result.reports[-1]
    summary: dict[str, Any] = {
        "seed": config.train.seed,
        "tag": tag,
        "run_dir": str(run_dir),
        "final_loss": final.total,
    }
    if config.eval_file:
        eval_data = read_episodes(config.eval_file, Split.TEST)
        report = evaluate(eval_data, result.model, config.train.decode, config.train.margin)
        (run_dir / "eval_report.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
        summary.update(precision=report.precision, recall=report.recall, f1=report.f1)
    return summary


def _print_summary(rows: list[dict[str, Any]]) -> None:
    frame = pd.DataFrame(rows)
    print(frame.to_string(index=False))
    metrics = [c for c in ("final_loss", "precision", "recall", "f1") if c in frame]
    if len(frame) > 1:
        for tag, group in frame.groupby("tag", sort=False):
            label = f"[{tag}] " if tag else ""
            for column in metrics:
                values = group[column].to_numpy(dtype=float)
                print(f"{label}{column}: {np.mean(values):.4f} ± {np.std(values):.4f} (n={len(values)})")


def cmd_train(args: argparse.Namespace) -> int:
    """Train one run, a seed sweep, or a hyperparameter grid sweep."""
    config = _base_config(args).with_overrides(_train_overrides(args))
    grid: dict[str, list[Any]] = {}
    if args.sweep:
        grid = json.loads(Path(args.sweep).read_text(encoding="utf-8"))
        if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
            raise UsageError("--sweep file must map dotted config paths to value lists")
    seeds = args.seeds or [config.train.seed]

    jobs: list[tuple[RunConfig, str]] = []
    for index, point in enumerate(expand_grid(grid)):
        tag = f"g{index}" if grid else ""
        for seed in seeds:
            jobs.append((config.with_overrides({**point, "train.seed": seed}), tag))

    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(run_training, job, tag, args.tensorboard) for job, tag in jobs]
            rows = [future.result() for future in futures]
    else:
        rows = [run_training(job, tag, args.tensorboard) for job, tag in jobs]

    _print_summary(rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def format_report(report: EvalReport) -> str:
    """Human-readable P/R/F1 line plus the FP-Span / FP-Type table."""
    errors = report.errors
    lines = [
        f"theta={report.threshold:g} r={report.radius:g}",
        f"P={report.precision:.4f} R={report.recall:.4f} F1={report.f1:.4f} "
        f"macro-F1={report.macro_f1:.4f}",
        f"span detection: P={report.span_detection.precision:.4f} "
        f"R={report.span_detection.recall:.4f} F1={report.span_detection.f1:.4f}",
        f"rejected spans: {report.rejected_count}",
        "",
        f"{'Model':<12}{'FP-Span':>10}{'FP-Type':>10}",
        f"{'SpanProto':<12}{errors.fp_span_pct:>10.2f}{errors.fp_type_pct:>10.2f}",
    ]
    if errors.no_false_positives:
        lines.append("(no false positives)")
    if report.distractor_rejection_rate is not None:
        lines.append(
            f"unknown-type rejection rate: {report.distractor_rejection_rate:.4f} "
            f"({report.distractor_proposals} proposals)"
        )
    return "\n".join(lines)


def cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate a checkpoint on an episode file."""
    model = load_checkpoint(args.checkpoint)
    data = read_episodes(args.eval_file, Split.TEST)
    thresholds = args.thresholds or [args.threshold]
    margin = MarginConfig(radius=args.radius)

    reports = []
    for threshold in thresholds:
        report = evaluate(data, model, DecodeConfig(threshold=threshold), margin)
        reports.append(report)
        print(format_report(report))
        print()

    out = Path(args.out) if args.out else Path(args.checkpoint).with_suffix(".eval.json")
    document = {
        "checkpoint": str(args.checkpoint),
        "eval_file": str(args.eval_file),
        "config": {"thresholds": thresholds, "radius": args.radius},
        "inputs": input_digests([args.checkpoint, args.eval_file]),
        "torch_version": torch.__version__,
        "reports": [r.model_dump(mode="json") for r in reports],
    }
    out.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    if args.csv:
        rows = [
            {
                "threshold": r.threshold,
                "episode": row.episode_index,
                "precision": row.scores.precision,
                "recall": row.scores.recall,
                "f1": row.scores.f1,
                "rejected": row.rejected,
            }
            for r in reports
            for row in r.episodes
        ]
        pd.DataFrame(rows).to_csv(args.csv, index=False)
    return EXIT_OK


# ---------------------------------------------------------------------------
# inspect
# ---------------------------------------------------------------------------


def cmd_inspect(args: argparse.Namespace) -> int:
    """Dump boundary scores (and optionally embeddings) for one episode."""
    model = load_checkpoint(args.checkpoint)
    data = read_episodes(args.episodes_file, Split.TEST)
    if not 0 <= args.index < len(data):
        raise UsageError(f"episode index {args.index} out of range (0..{len(data) - 1})")
    dump = inspect_episode(
        model,
        data.episodes[args.index],
        DecodeConfig(threshold=args.threshold),
        MarginConfig(radius=args.radius),
        embeddings=args.dump_embeddings,
    )
    dump["inputs"] = input_digests([args.checkpoint, args.episodes_file])
    # default output sits beside the checkpoint, inside its run directory
    checkpoint = Path(args.checkpoint)
    default_out = checkpoint.with_name(f"{checkpoint.stem}.inspect_{args.index}.json")
    out = Path(args.out) if args.out else default_out
    write_inspection(dump, out)
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    """Argument parser for all subcommands."""
    parser = argparse.ArgumentParser(prog="spanproto", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write synthetic train/dev/test episode files")
    gen.add_argument("--config", type=Path)
    gen.add_argument("--ways", type=int)
    gen.add_argument("--shots", type=int)
    gen.add_argument("--queries", type=int)
    gen.add_argument("--episodes", type=int, help="train episodes")
    gen.add_argument("--eval-episodes", type=int, default=20, help="dev and test episodes")
    gen.add_argument("--distractor-prob", type=float)
    gen.add_argument("--mode", choices=["intra", "inter"])
    gen.add_argument("--seed", type=int, default=42)
    gen.add_argument("--out", type=Path)
    gen.set_defaults(handler=cmd_generate)

    train = sub.add_parser("train", help="train on an episode file")
    train.add_argument("--config", type=Path)
    train.add_argument("--train-file", type=Path)
    train.add_argument("--eval-file", type=Path)
    train.add_argument("--run-root", type=Path)
    train.add_argument("--steps", type=int)
    train.add_argument("--pretrain-steps", type=int)
    train.add_argument("--threshold", type=float)
    train.add_argument("--radius", type=float)
    train.add_argument("--no-margin-loss", action="store_true")
    train.add_argument("--lr", type=float)
    train.add_argument("--warmup", type=float)
    train.add_argument("--embedding-dim", type=int)
    train.add_argument("--mixing-layers", type=int)
    train.add_argument("--episodes-per-step", type=int)
    train.add_argument("--checkpoint-every", type=int)
    train.add_argument("--seed", type=int)
    train.add_argument("--seeds", type=_int_list, help="comma-separated seed sweep")
    train.add_argument("--sweep", type=Path, help="JSON grid of dotted config paths")
    train.add_argument("--workers", type=int, default=1)
    train.add_argument("--tensorboard", action="store_true")
    train.set_defaults(handler=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--eval-file", type=Path, required=True)
    ev.add_argument("--threshold", type=float, default=DecodeConfig().threshold)
    ev.add_argument("--thresholds", type=_float_list, help="comma-separated θ sweep")
    ev.add_argument("--radius", type=float, default=MarginConfig().radius)
    ev.add_argument("--out", type=Path)
    ev.add_argument("--csv", type=Path, help="per-episode P/R/F1 table")
    ev.set_defaults(handler=cmd_eval)

    ins = sub.add_parser("inspect", help="dump scores and embeddings for one episode")
    ins.add_argument("--checkpoint", type=Path, required=True)
    ins.add_argument("--episodes-file", type=Path, required=True)
    ins.add_argument("--index", type=int, default=0)
    ins.add_argument("--threshold", type=float, default=DecodeConfig().threshold)
    ins.add_argument("--radius", type=float, default=MarginConfig().radius)
    ins.add_argument("--dump-embeddings", action="store_true")
    ins.add_argument("--out", type=Path)
    ins.set_defaults(handler=cmd_inspect)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run the subcommand and map errors to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else get_settings().log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, TrainingError) and exc.report is not None:
            print(exc.report.model_dump_json(), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
