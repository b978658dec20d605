"""Command-line surface binding all modules into reproducible runs.

Subcommands: generate, train, evaluate, predict, compare-annotators,
export-confusion. Exit codes: 0 success, 1 runtime failure, 2 usage or
configuration error. Progress goes to standard error (RHYTHMNET_VERBOSITY
selects 0/1/2); machine artifacts only ever land in files.

Every run writes a `run_manifest.json` beside its outputs holding the fully
resolved configuration, the seed, and wall-clock duration. Re-running a
command with the same seed and flags reproduces every other artifact
bit-exactly (single-threaded mode); the run manifest itself differs only in
its duration field.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import CLASS_NAMES, annotations_to_grid, grid_to_names
from .dataset_io import read_dataset, read_signal, write_dataset
from .errors import ConfigError, CoverageError, RhythmNetError
from .metrics import (annotator_comparison, confusion_to_csv, confusion_to_svg,
                      evaluate_grids, parse_confusion_csv, report_to_csv,
                      scores_to_csv)
from .network import NetworkConfig, build, predict_record
from .rng import derive
from .synth import SynthConfig, generate_record, plan_corpus
from .training import TrainConfig, fit, split_by_patient

log = logging.getLogger("rhythmnet.cli")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    tool_version: str
    inputs: list[str]
    outputs: list[str]
    duration_s: float


def write_run_manifest(directory: Path, manifest: RunManifest) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    tmp = directory / "run_manifest.json.tmp"
    tmp.write_text(json.dumps(asdict(manifest), indent=1, sort_keys=True))
    os.replace(tmp, directory / "run_manifest.json")


def _setup_logging() -> None:
    level = {"0": logging.WARNING, "1": logging.INFO, "2": logging.DEBUG}.get(
        os.environ.get("RHYTHMNET_VERBOSITY", "1"), logging.INFO)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    config = SynthConfig(
        seed=args.seed,
        records_per_class=args.per_class,
        duration_s=args.duration_s,
        noise_level=args.noise_level,
        classes=tuple(args.classes.split(",")) if args.classes else CLASS_NAMES,
        transition_fraction=args.transition_fraction,
    )
    t0 = time.time()
    out = Path(args.out)
    specs = plan_corpus(config)
    if args.threads > 1:
        # per-record streams make parallel generation equal serial output
        with concurrent.futures.ThreadPoolExecutor(args.threads) as pool:
            records = [rec for rec, _ in pool.map(
                lambda s: generate_record(s, config), specs)]
    else:
        records = [generate_record(spec, config)[0] for spec in specs]
    write_dataset(records, out)
    log.info("generated %d records into %s", len(records), out)
    write_run_manifest(out, RunManifest(
        command="generate",
        config={"seed": config.seed, "per_class": config.records_per_class,
                "duration_s": config.duration_s,
                "noise_level": config.noise_level,
                "classes": list(config.classes),
                "transition_fraction": config.transition_fraction,
                "threads": args.threads},
        seed=args.seed, tool_version=__version__, inputs=[],
        outputs=[str(out / "manifest.json")], duration_s=time.time() - t0))
    return 0


def cmd_train(args) -> int:
    if args.epochs < 1:
        raise ConfigError("--epochs must be >= 1")
    net_cfg = NetworkConfig(
        residual_blocks=args.blocks,
        filter_len=args.filter_len,
        base_filters=args.base_filters,
        widen_every=args.widen_every,
        subsample_every=args.subsample_every,
        dropout_rate=args.dropout,
    )
    t0 = time.time()
    records = read_dataset(args.data)
    train_records, val_records = split_by_patient(
        records, val_fraction=args.val_fraction, seed=args.seed)
    log.info("training on %d records, validating on %d (stride %d)",
             len(train_records), len(val_records), net_cfg.output_stride)
    params, _ = build(net_cfg, derive(args.seed, "build"))
    train_cfg = TrainConfig(
        batch_size=args.batch, max_epochs=args.epochs,
        plateau_patience=args.patience, seed=args.seed,
        checkpoint_dir=args.out)
    best, history = fit(train_cfg, net_cfg, params, train_records, val_records,
                        init_lr=args.lr)
    out = Path(args.out)
    write_run_manifest(out, RunManifest(
        command="train",
        config={"data": str(args.data), "seed": args.seed,
                "epochs": args.epochs, "batch": args.batch,
                "blocks": args.blocks, "base_filters": args.base_filters,
                "filter_len": args.filter_len, "widen_every": args.widen_every,
                "subsample_every": args.subsample_every,
                "dropout": args.dropout, "patience": args.patience,
                "lr": args.lr, "val_fraction": args.val_fraction},
        seed=args.seed, tool_version=__version__, inputs=[str(args.data)],
        outputs=[str(out / "checkpoint.rnet"), str(out / "stats.csv")],
        duration_s=time.time() - t0))
    log.info("best val loss %.4f at epoch %d", best.best_val_loss, best.epoch)
    return 0


def cmd_evaluate(args) -> int:
    t0 = time.time()
    ckpt = load_checkpoint(args.checkpoint)
    records = read_dataset(args.data)
    stride = ckpt.config.output_stride
    preds, truths = [], []
    for rec in records:
        preds.append(predict_record(ckpt.parameters, ckpt.config, rec.samples))
        truths.append(annotations_to_grid(rec, stride=stride))
    report = evaluate_grids(preds, truths, ckpt.config.class_count)
    out = Path(args.report)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sequence.csv").write_bytes(
        scores_to_csv("sequence", report.sequence, report.sequence_aggregate))
    (out / "set.csv").write_bytes(
        scores_to_csv("set", report.set, report.set_aggregate))
    (out / "confusion.csv").write_bytes(confusion_to_csv(report.confusion))
    log.info("sequence F1 %.4f, set F1 %.4f over %d records",
             report.sequence_aggregate.f1, report.set_aggregate.f1,
             len(records))
    write_run_manifest(out, RunManifest(
        command="evaluate",
        config={"checkpoint": str(args.checkpoint), "data": str(args.data)},
        seed=0, tool_version=__version__,
        inputs=[str(args.checkpoint), str(args.data)],
        outputs=[str(out / n) for n in
                 ("sequence.csv", "set.csv", "confusion.csv")],
        duration_s=time.time() - t0))
    return 0


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    samples = read_signal(args.record)
    grid = predict_record(ckpt.parameters, ckpt.config, samples)
    stride = ckpt.config.output_stride
    hz = ckpt.config.input_hz
    lines = ["onset_s,label"]
    lines += [f"{i * stride / hz:.3f},{name}"
              for i, name in enumerate(grid_to_names(grid))]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    log.info("predicted %d positions into %s", len(grid), out)
    return 0


def cmd_compare_annotators(args) -> int:
    t0 = time.time()
    consensus_records = read_dataset(args.consensus)
    consensus = {r.record_id: annotations_to_grid(r) for r in consensus_records}
    order = sorted(consensus)
    annotators = {}
    for directory in args.annotators:
        name = Path(directory).name
        grids = {r.record_id: annotations_to_grid(r)
                 for r in read_dataset(directory)}
        missing = [rid for rid in order if rid not in grids]
        if missing:
            raise CoverageError(
                f"annotator {name!r} is missing record(s) {missing[:3]}")
        annotators[name] = [grids[rid] for rid in order]
    result = annotator_comparison(annotators, [consensus[r] for r in order])
    out = Path(args.report)
    out.mkdir(parents=True, exist_ok=True)
    for name, report in result.per_annotator.items():
        (out / f"annotator_{name}.csv").write_bytes(report_to_csv(report))
    lines = ["metric,class,precision,recall,f1"]
    for metric, rows, agg in (("sequence", result.mean_sequence,
                               result.mean_sequence_aggregate),
                              ("set", result.mean_set,
                               result.mean_set_aggregate)):
        for s in rows:
            lines.append(f"{metric},{s.label},{s.precision!r},{s.recall!r},"
                         f"{s.f1!r}")
        lines.append(f"{metric},aggregate,{agg.precision!r},{agg.recall!r},"
                     f"{agg.f1!r}")
    lines.append(f"sequence_accuracy,,,,{result.mean_sequence_accuracy!r}")
    (out / "mean.csv").write_text("\n".join(lines) + "\n")
    log.info("mean annotator sequence F1 %.4f over %d annotators",
             result.mean_sequence_aggregate.f1, len(annotators))
    write_run_manifest(out, RunManifest(
        command="compare-annotators",
        config={"consensus": str(args.consensus),
                "annotators": [str(a) for a in args.annotators]},
        seed=0, tool_version=__version__,
        inputs=[str(args.consensus)] + [str(a) for a in args.annotators],
        outputs=[str(out / "mean.csv")], duration_s=time.time() - t0))
    return 0


def cmd_export_confusion(args) -> int:
    matrix = parse_confusion_csv(Path(args.report).read_bytes())
    out = Path(args.svg)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(confusion_to_svg(matrix))
    log.info("wrote heatmap %s", out)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rhythmnet",
        description="ECG rhythm sequence labeling: synthetic corpus "
                    "generation, training, evaluation, and reporting.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--per-class", type=int, default=10)
    g.add_argument("--classes", default=None,
                   help="comma-separated class names (default: all 14)")
    g.add_argument("--duration-s", type=float, default=30.0)
    g.add_argument("--noise-level", type=float, default=0.03)
    g.add_argument("--transition-fraction", type=float, default=0.25)
    g.add_argument("--threads", type=int, default=1)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a network on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--blocks", type=int, default=16)
    t.add_argument("--base-filters", type=int, default=64)
    t.add_argument("--filter-len", type=int, default=16)
    t.add_argument("--widen-every", type=int, default=4)
    t.add_argument("--subsample-every", type=int, default=2)
    t.add_argument("--dropout", type=float, default=0.2)
    t.add_argument("--patience", type=int, default=3)
    t.add_argument("--lr", type=float, default=0.001)
    t.add_argument("--val-fraction", type=float, default=0.1)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="label one raw float32 signal file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--record", required=True,
                   help="raw little-endian float32 samples at 200 Hz")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    c = sub.add_parser("compare-annotators",
                       help="score annotator datasets against a consensus")
    c.add_argument("--consensus", required=True)
    c.add_argument("--annotators", required=True, nargs="+")
    c.add_argument("--report", required=True)
    c.set_defaults(func=cmd_compare_annotators)

    x = sub.add_parser("export-confusion",
                       help="render a confusion CSV as an SVG heatmap")
    x.add_argument("--report", required=True)
    x.add_argument("--svg", required=True)
    x.set_defaults(func=cmd_export_confusion)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"rhythmnet: {e}", file=sys.stderr)
        return 2
    except (RhythmNetError, OSError) as e:
        print(f"rhythmnet: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
