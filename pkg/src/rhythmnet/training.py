"""Optimization loop: minibatching, Adam, plateau schedule, best-model
checkpointing, and patient-disjoint splitting.

Writes a one-line-per-epoch log through `logging` and, when a checkpoint
directory is set, a `stats.csv` with one row per epoch plus the best
checkpoint under `checkpoint.rnet`.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as streams
from .checkpoint import Checkpoint, save_checkpoint
from .data import EcgRecord, annotations_to_grid, pad_to_stride, robust_normalize
from .errors import CheckpointError, ConfigError, InvalidInputError, SplitInfeasibleError
from .kernels import softmax_xent
from .network import NetworkConfig, backward, forward, trainable_names
from .optim import AdamState, PlateauScheduler, adam_step, init_adam

log = logging.getLogger("rhythmnet.training")

STATS_HEADER = "epoch,train_loss,val_loss,lr,is_best"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 50
    plateau_patience: int = 3
    lr_factor: float = 10.0
    min_lr: float = 1e-6
    seed: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.plateau_patience < 1:
            raise ConfigError("plateau_patience must be >= 1")
        if self.lr_factor <= 1:
            raise ConfigError("lr_factor must be > 1")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    is_best: bool

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.train_loss!r},{self.val_loss!r},"
                f"{self.lr!r},{int(self.is_best)}")


def split_by_patient(records: list[EcgRecord], val_fraction: float = 0.1,
                     seed: int = 0):
    """Partition records so no patient appears on both sides.

    Patients are shuffled by seed and assigned to validation until it holds
    about `val_fraction` of the records.
    """
    by_patient: dict[str, list[EcgRecord]] = {}
    for rec in records:
        by_patient.setdefault(rec.patient_id, []).append(rec)
    patients = sorted(by_patient)
    if len(patients) < 2:
        raise SplitInfeasibleError(
            f"need at least 2 patients to split, got {len(patients)}")
    order = streams.derive(seed, "patient-split").permutation(len(patients))
    shuffled = [patients[i] for i in order]
    target = max(1, round(val_fraction * len(records)))
    val_names: set[str] = set()
    taken = 0
    for name in shuffled[:-1]:  # always leave at least one patient for train
        if taken >= target:
            break
        val_names.add(name)
        taken += len(by_patient[name])
    train = [r for r in records if r.patient_id not in val_names]
    val = [r for r in records if r.patient_id in val_names]
    return train, val


def prepare_records(records: list[EcgRecord], config: NetworkConfig):
    """Normalize, pad, and grid-label every record once."""
    if not records:
        raise InvalidInputError("no records to prepare")
    cache = []
    for rec in records:
        x = pad_to_stride(robust_normalize(rec.samples), config.output_stride)
        grid = annotations_to_grid(rec, stride=config.output_stride,
                                   padded_len=len(x))
        cache.append((x, grid))
    return cache


def _assemble(cache, indices, stride):
    time = max(len(cache[i][0]) for i in indices)
    x = np.zeros((len(indices), 1, time), dtype=np.float32)
    grids = []
    for row, i in enumerate(indices):
        xi, gi = cache[i]
        x[row, 0, :len(xi)] = xi
        if len(xi) < time:  # extend over batch padding with the final label
            extra = (time - len(xi)) // stride
            gi = np.concatenate([gi, np.full(extra, gi[-1], dtype=gi.dtype)])
        grids.append(gi)
    return x, np.concatenate(grids)


def train_epoch(params, config: NetworkConfig, cache, batch_size: int,
                state: AdamState, shuffle_rng, dropout_rng) -> float:
    """One pass over the shuffled training records; returns the mean
    per-position loss. Deterministic given the two streams."""
    if not cache:
        raise InvalidInputError("empty dataset: nothing to train on")
    order = shuffle_rng.permutation(len(cache))
    total_loss = 0.0
    total_positions = 0
    for start in range(0, len(order), batch_size):
        indices = order[start:start + batch_size]
        x, targets = _assemble(cache, indices, config.output_stride)
        logits, tape = forward(params, config, x, mode="train", rng=dropout_rng)
        flat = logits.reshape(-1, config.class_count)
        loss, grad = softmax_xent(flat, targets, config.class_count)
        grads = backward(params, config, tape, grad.reshape(logits.shape))
        adam_step(params, grads, state)
        total_loss += loss * len(targets)
        total_positions += len(targets)
    return total_loss / total_positions


def evaluate_loss(params, config: NetworkConfig, cache,
                  batch_size: int = 32) -> float:
    """Mean per-position loss in eval mode."""
    if not cache:
        raise InvalidInputError("empty dataset: nothing to evaluate")
    total_loss = 0.0
    total_positions = 0
    for start in range(0, len(cache), batch_size):
        indices = range(start, min(start + batch_size, len(cache)))
        x, targets = _assemble(cache, list(indices), config.output_stride)
        logits, _ = forward(params, config, x, mode="eval")
        loss, _ = softmax_xent(logits.reshape(-1, config.class_count), targets,
                               config.class_count)
        total_loss += loss * len(targets)
        total_positions += len(targets)
    return total_loss / total_positions


def fit(train_cfg: TrainConfig, net_cfg: NetworkConfig, params,
        train_records: list[EcgRecord], val_records: list[EcgRecord],
        init_lr: float = 0.001):
    """Train, tracking the best validation loss; returns (best Checkpoint,
    list of EpochStats). The best checkpoint is returned, never the last.
    """
    if train_cfg.max_epochs < 1:
        raise ConfigError("max_epochs must be >= 1 (nothing to train)")
    train_cache = prepare_records(train_records, net_cfg)
    val_cache = prepare_records(val_records, net_cfg)

    state = init_adam(params, trainable_names(params), lr=init_lr)
    sched = PlateauScheduler(patience=train_cfg.plateau_patience,
                             factor=train_cfg.lr_factor, min_lr=train_cfg.min_lr)
    ckpt_dir = Path(train_cfg.checkpoint_dir) if train_cfg.checkpoint_dir else None
    stats_path = None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        stats_path = ckpt_dir / "stats.csv"
        stats_path.write_text(STATS_HEADER + "\n")

    history: list[EpochStats] = []
    best: Checkpoint | None = None
    best_val = float("inf")
    for epoch in range(1, train_cfg.max_epochs + 1):
        train_loss = train_epoch(
            params, net_cfg, train_cache, train_cfg.batch_size, state,
            shuffle_rng=streams.derive(train_cfg.seed, "shuffle", epoch),
            dropout_rng=streams.derive(train_cfg.seed, "dropout", epoch))
        val_loss = evaluate_loss(params, net_cfg, val_cache, train_cfg.batch_size)

        is_best = val_loss < best_val
        if is_best:
            best_val = val_loss
            best = Checkpoint(
                config=net_cfg,
                parameters={k: v.copy() for k, v in params.items()},
                optimizer_state=copy.deepcopy(state),
                epoch=epoch,
                best_val_loss=val_loss,
            )
            if ckpt_dir is not None:
                try:
                    save_checkpoint(best, ckpt_dir / "checkpoint.rnet")
                except OSError as e:
                    err = CheckpointError(f"cannot write checkpoint: {e}")
                    err.history = history
                    raise err from e

        state.lr = sched.update(val_loss, state.lr)
        row = EpochStats(epoch, train_loss, val_loss, state.lr, is_best)
        history.append(row)
        log.info("epoch %d train %.4f val %.4f lr %g%s", epoch, train_loss,
                 val_loss, state.lr, " *" if is_best else "")
        if stats_path is not None:
            with open(stats_path, "a") as f:
                f.write(row.csv_row() + "\n")
    return best, history
