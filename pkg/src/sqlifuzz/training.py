"""
Training loop: mini-batch Adam over teacher-forced pairs, with 10-fold
cross-validated grid selection when more than one architecture is offered.

Each (grid point, fold) evaluation is an independent pure task seeded from
(seed, grid index, fold index), so results do not depend on scheduling and
folds may run in worker threads. The winning grid point is retrained on
the full dataset; per-epoch losses are recorded in evaluation mode (no
dropout) so the curve is a pure function of the parameters.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import TrainingPair, kfold_split
from .model import Model, TransformerConfig
from .optim import DEFAULT_LR, AdamState, adam_step
from .tokens import Vocabulary, encode

log = logging.getLogger("sqlifuzz.training")


class DivergedTraining(RuntimeError):
    """Raised when a loss goes non-finite; names the offending grid point."""


@dataclass
class TrainSettings:
    epochs: int = 30
    batch_size: int = 8
    lr: float = DEFAULT_LR
    warmup_steps: int = 0
    max_steps: int | None = None
    cv_epochs: int = 3
    stop_loss: float | None = None
    eval_cap: int = 512  # pairs used for the per-epoch loss estimate


@dataclass
class TrainingReport:
    chosen: TransformerConfig
    grid_losses: list[tuple[TransformerConfig, float]]
    epoch_losses: list[float] = field(default_factory=list)
    steps: int = 0
    final_loss: float = float("nan")
    metadata: dict = field(default_factory=dict)


def grid_tiny(vocab_size: int, max_len: int = 64) -> list[TransformerConfig]:
    return [
        TransformerConfig(
            vocab_size=vocab_size, d_e=32, n_heads=2, n_layers=1,
            d_ff=64, max_len=max_len, dropout=0.0,
        )
    ]


def grid_paper_like(vocab_size: int, max_len: int = 64) -> list[TransformerConfig]:
    grid = []
    for n_layers in (1, 2):
        for n_heads in (2, 4):
            for d_ff in (64, 128):
                for d_e in (32, 64):
                    grid.append(
                        TransformerConfig(
                            vocab_size=vocab_size, d_e=d_e, n_heads=n_heads,
                            n_layers=n_layers, d_ff=d_ff, max_len=max_len,
                        )
                    )
    return grid


GRID_PRESETS = {"tiny": grid_tiny, "paper-like": grid_paper_like}


def encode_pairs(
    pairs: list[TrainingPair], vocab: Vocabulary
) -> list[tuple[np.ndarray, np.ndarray]]:
    return [
        (
            np.asarray(encode(p.input, vocab), dtype=np.int64),
            np.asarray(encode(p.output, vocab), dtype=np.int64),
        )
        for p in pairs
    ]


def eval_loss(model: Model, data, cap: int | None = None) -> float:
    """Mean per-pair teacher-forced loss, deterministic (no dropout)."""
    subset = data if cap is None or len(data) <= cap else data[:cap]
    total = 0.0
    for src, dst in subset:
        total += model.loss(src, dst)
    return total / len(subset)


def _fit(
    model: Model,
    data,
    settings: TrainSettings,
    rng: np.random.Generator,
    epochs: int,
    record: TrainingReport | None = None,
    label: str = "",
) -> None:
    state = AdamState.for_params(model.params, lr=settings.lr)
    dropout_rng = rng if model.config.dropout > 0 else None
    steps = 0
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(order), settings.batch_size):
            batch = order[start : start + settings.batch_size]
            grads_sum = None
            batch_loss = 0.0
            for idx in batch:
                src, dst = data[idx]
                value, grads = model.loss_and_grad(src, dst, rng=dropout_rng)
                batch_loss += value
                if grads_sum is None:
                    grads_sum = grads
                else:
                    for k in grads_sum:
                        grads_sum[k] += grads[k]
            if not np.isfinite(batch_loss):
                raise DivergedTraining(
                    f"non-finite loss at step {steps} on grid point "
                    f"({model.config.describe()})"
                )
            scale = 1.0 / len(batch)
            for k in grads_sum:
                grads_sum[k] *= scale
            lr_scale = 1.0
            if settings.warmup_steps > 0:
                lr_scale = min(1.0, (steps + 1) / settings.warmup_steps)
            adam_step(model.params, grads_sum, state, lr_scale=lr_scale)
            steps += 1
            if settings.max_steps is not None and steps >= settings.max_steps:
                break
        if record is not None:
            epoch_loss = eval_loss(model, data, settings.eval_cap)
            record.epoch_losses.append(epoch_loss)
            record.steps = steps
            log.info("%s epoch %d: loss %.4f (%d steps)", label, epoch + 1,
                     epoch_loss, steps)
            if not np.isfinite(epoch_loss):
                raise DivergedTraining(
                    f"non-finite evaluation loss on grid point "
                    f"({model.config.describe()})"
                )
            if settings.stop_loss is not None and epoch_loss < settings.stop_loss:
                break
        if settings.max_steps is not None and steps >= settings.max_steps:
            break
    if record is not None:
        record.steps = steps


def _cv_task(args) -> float:
    config, data, train_idx, val_idx, settings, task_seed = args
    rng = np.random.default_rng(task_seed)
    model = Model(config, rng=rng)
    train_data = [data[i] for i in train_idx]
    cv_settings = TrainSettings(
        epochs=settings.cv_epochs, batch_size=settings.batch_size,
        lr=settings.lr, warmup_steps=settings.warmup_steps,
    )
    _fit(model, train_data, cv_settings, rng, cv_settings.epochs)
    val = eval_loss(model, [data[i] for i in val_idx])
    if not np.isfinite(val):
        raise DivergedTraining(
            f"non-finite validation loss on grid point ({config.describe()})"
        )
    return val


def train(
    pairs: list[TrainingPair],
    grid: list[TransformerConfig],
    vocab: Vocabulary,
    settings: TrainSettings | None = None,
    seed: int = 0,
    jobs: int = 1,
    k_folds: int = 10,
) -> tuple[Model, TrainingReport]:
    """Select the best grid point by k-fold cross-validation (skipped for a
    single-point grid) and train it on the full dataset."""
    if len(pairs) < k_folds:
        raise ValueError(f"need at least {k_folds} pairs, got {len(pairs)}")
    settings = settings or TrainSettings()
    data = encode_pairs(pairs, vocab)

    grid_losses: list[tuple[TransformerConfig, float]] = []
    if len(grid) > 1:
        split = kfold_split(len(data), k=k_folds, seed=seed)
        tasks = []
        for gi, config in enumerate(grid):
            for fold in range(k_folds):
                tasks.append(
                    (
                        config,
                        data,
                        split.train_indices(fold),
                        split.val_indices(fold),
                        settings,
                        np.random.SeedSequence((seed, gi, fold)),
                    )
                )
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_cv_task, tasks))
        else:
            results = [_cv_task(t) for t in tasks]
        for gi, config in enumerate(grid):
            fold_losses = results[gi * k_folds : (gi + 1) * k_folds]
            mean = float(np.mean(fold_losses))
            grid_losses.append((config, mean))
            log.info("grid point (%s): mean CV loss %.4f", config.describe(), mean)
        best_idx = min(range(len(grid)), key=lambda i: grid_losses[i][1])
        chosen = grid[best_idx]
    else:
        chosen = grid[0]
        grid_losses.append((chosen, float("nan")))

    report = TrainingReport(chosen=chosen, grid_losses=grid_losses)
    report.metadata = {
        "seed": seed,
        "pairs": len(pairs),
        "vocab_size": len(vocab),
        "dtype": "float64",
        "residual_connection": "identity: each sublayer adds its input "
        "back before layer normalization",
    }
    rng = np.random.default_rng(np.random.SeedSequence((seed, len(grid))))
    model = Model(chosen, rng=rng)
    _fit(model, data, settings, rng, settings.epochs, record=report, label="train")
    report.final_loss = report.epoch_losses[-1] if report.epoch_losses else float("nan")
    return model, report
