"""Unsupervised training loop: Adam on the negated objective with
validation-based early stopping and best-checkpoint selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bgat import Model, create_model
from .data import Dataset
from .diffkit import adam_step, init_adam
from .diffkit.tensor import NonFiniteError
from .evaluation import batched_ee
from .system import SystemConfig


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters.

    Defaults are full-scale (batch 2048, 1000 epochs); use
    ``desk_train_config`` for the small-budget setup.
    """

    learning_rate: float = 5e-5
    batch_size: int = 2048
    max_epochs: int = 1000
    patience: int = 10
    val_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.max_epochs,
               self.patience, self.val_fraction) <= 0:
            raise ValueError("all training parameters must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")


def desk_train_config(seed: int = 0, max_epochs: int = 100,
                      batch_size: int = 256) -> TrainConfig:
    return TrainConfig(batch_size=batch_size, max_epochs=max_epochs, seed=seed)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_ee: float
    best_so_far: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_ee: float = -np.inf
    stopped_early: bool = False

    def val_curve(self) -> list[float]:
        return [r.val_ee for r in self.records]


def _validation_ee(model: Model, users_xy: np.ndarray,
                   chunk: int = 512) -> float:
    """Mean exact EE of the model outputs over a validation stack."""
    cfg = model.cfg
    ees = []
    for lo in range(0, users_xy.shape[0], chunk):
        batch = users_xy[lo:lo + chunk]
        x, p = model.forward_batch(batch)
        ees.append(batched_ee(cfg, batch, x.data, p.data))
    return float(np.mean(np.concatenate(ees)))


def train(kind: str, cfg: SystemConfig, dataset: Dataset, tc: TrainConfig,
          arch=None) -> tuple[Model, TrainHistory]:
    """Minimize the mean negated objective over mini-batches with Adam.

    A seed-determined fraction of the dataset is held out; after each epoch
    the mean exact EE on it decides checkpointing, and training stops after
    ``patience`` epochs without improvement. The returned model carries the
    best-validation parameters.
    """
    if dataset.count < 2:
        raise ValueError("dataset too small to split")
    rng = np.random.default_rng(tc.seed)
    perm = rng.permutation(dataset.count)
    n_val = max(1, int(round(tc.val_fraction * dataset.count)))
    val_xy = dataset.users_xy[perm[:n_val]]
    train_xy = dataset.users_xy[perm[n_val:]]

    model = create_model(kind, cfg, seed=tc.seed, arch=arch)
    adam = init_adam(model.params, lr=tc.learning_rate)

    history = TrainHistory()
    best_flat = model.params.flatten()
    since_best = 0

    for epoch in range(1, tc.max_epochs + 1):
        order = rng.permutation(train_xy.shape[0])
        losses = []
        for lo in range(0, order.size, tc.batch_size):
            batch = train_xy[order[lo:lo + tc.batch_size]]
            model.params.zero_grad()
            try:
                loss = model.batch_loss(batch)
            except NonFiniteError as exc:
                raise TrainingError(
                    f"epoch {epoch}, batch offset {lo}: {exc}") from exc
            if not np.isfinite(loss.data):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch offset {lo}")
            loss.backward()
            grads = model.params.grads()
            model.params, adam = adam_step(model.params, grads, adam)
            losses.append(float(loss.data))

        val_ee = _validation_ee(model, val_xy)
        if not np.isfinite(val_ee):
            raise TrainingError(f"non-finite validation EE at epoch {epoch}")
        if val_ee > history.best_val_ee:
            history.best_val_ee = val_ee
            history.best_epoch = epoch
            best_flat = model.params.flatten()
            since_best = 0
        else:
            since_best += 1
        history.records.append(EpochRecord(
            epoch=epoch, train_loss=float(np.mean(losses)), val_ee=val_ee,
            best_so_far=history.best_val_ee))
        if since_best >= tc.patience:
            history.stopped_early = True
            break

    model.params.assign_flat(best_flat)
    return model, history
