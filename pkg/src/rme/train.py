"""Epoch loop with validation-based early stopping.

Samples are shuffled each epoch from a named seed, split into fixed-size
batches (the trailing partial batch is kept), and stepped with Adam.  The
best validation loss snapshot is restored into the model when training ends,
whether by patience or by the epoch cap.  ``epochs_trained`` keeps counting
across resumed runs; optimizer moments are not carried over a resume.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateInputError
from .model import CgformerModel, batch_loss, train_step
from .optim import AdamState
from .scene import Sample
from .seeding import make_rng
from .tensor import Tensor


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 5e-4
    patience: int = 10
    min_delta: float = 0.0    # validation must improve by this much to count
    shuffle_seed: int = 0

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigurationError("epochs, batch_size and patience must be >= 1")
        if self.lr <= 0.0:
            raise ConfigurationError(f"learning rate must be positive, got {self.lr}")
        if self.min_delta < 0.0:
            raise ConfigurationError(f"min_delta must be >= 0, got {self.min_delta}")


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_val: float = float("inf")
    best_epoch: int = -1
    stopped_early: bool = False


def make_batches(count: int, batch_size: int, perm: np.ndarray) -> list[np.ndarray]:
    return [perm[i:i + batch_size] for i in range(0, count, batch_size)]


def validation_loss(model: CgformerModel, val_samples: list[Sample]) -> float:
    """Mean per-sample loss in dB^2; no tape is open, nothing records."""
    return float(batch_loss(model, val_samples).data)


def _snapshot(model: CgformerModel) -> dict:
    return {name: Tensor(t.data.copy()) for name, t in model.named_params()}


def train_model(model: CgformerModel, train_samples: list[Sample],
                val_samples: list[Sample], cfg: TrainConfig,
                log=None) -> TrainResult:
    cfg.validate()
    if not train_samples:
        raise DegenerateInputError("no training samples")
    if not val_samples:
        raise DegenerateInputError("no validation samples")

    state = AdamState.for_params(model.tensors(), lr=cfg.lr)
    result = TrainResult()
    best_params = _snapshot(model)
    bad_epochs = 0
    start_epoch = model.epochs_trained

    for offset in range(cfg.epochs):
        epoch = start_epoch + offset
        tick = time.monotonic()
        perm = make_rng(cfg.shuffle_seed, "epoch-shuffle", epoch).permutation(
            len(train_samples))
        losses = []
        for batch_idx in make_batches(len(train_samples), cfg.batch_size, perm):
            batch = [train_samples[i] for i in batch_idx]
            losses.append(train_step(model, state, batch))
        train_loss = float(np.mean(losses))
        val_loss = validation_loss(model, val_samples)
        model.epochs_trained = epoch + 1

        improved = val_loss < result.best_val - cfg.min_delta
        if improved:
            result.best_val = val_loss
            result.best_epoch = epoch
            best_params = _snapshot(model)
            bad_epochs = 0
        else:
            bad_epochs += 1

        result.history.append({"epoch": epoch, "train_loss": train_loss,
                               "val_loss": val_loss, "improved": improved})
        if log is not None:
            log(f"epoch {epoch}: train {train_loss:.4f} dB^2, "
                f"val {val_loss:.4f} dB^2"
                f"{' *' if improved else ''} "
                f"({time.monotonic() - tick:.1f}s)")
        if bad_epochs >= cfg.patience:
            result.stopped_early = True
            break

    model.rebind(best_params)
    return result


def write_history_csv(history: list[dict], path: str) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,val_loss,improved\n")
        for row in history:
            fh.write(f"{row['epoch']},{row['train_loss']:.12g},"
                     f"{row['val_loss']:.12g},{int(row['improved'])}\n")


def stderr_log(message: str) -> None:
    print(message, file=sys.stderr)
