"""Joint end-to-end training with day-batching and early stopping on val F1.

A batch is ``batch_size`` trading days; each day's full stock cross-section
goes through encoders -> fusion -> GAT -> head in one graph, since the GAT
needs all of a day's nodes simultaneously.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .backtest import PredictionRecord
from .metrics import ConfusionCounts, confusion, f1_accuracy, mcc
from .model import ModelConfig, MovementModel
from .seeding import stream

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """NaN loss; carries the offending batch dates for the dump."""

    def __init__(self, message, batch_dates=()):
        super().__init__(message)
        self.batch_dates = list(batch_dates)


@dataclass
class TrainConfig:
    learning_rate: float = 4e-4
    max_epochs: int = 8000
    batch_size: int = 8          # trading days per batch
    patience: int = 50           # epochs without validation-F1 improvement
    threshold: float = 0.5
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)

    def validate(self):
        if min(self.learning_rate, self.max_epochs, self.batch_size,
               self.patience) <= 0:
            raise ValueError("train config fields must be positive")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_f1: float
    val_acc: float
    val_mcc: float


class Adam:
    """Adam with the standard moment defaults."""

    def __init__(self, params: dict, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros(t.shape) for k, t in params.items()}
        self.v = {k: np.zeros(t.shape) for k, t in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / b1c
            v_hat = self.v[name] / b2c
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def day_loss(model: MovementModel, section) -> ad.Tensor:
    p = model.forward_day(section.price, section.media, section.adj)
    return ad.bce_loss(p, section.labels)


def train_epoch(model: MovementModel, optimizer: Adam, train_sections,
                config: TrainConfig, rng) -> float:
    """One pass over shuffled day-batches; returns the mean batch loss."""
    order = rng.permutation(len(train_sections))
    total, steps = 0.0, 0
    for start in range(0, len(order), config.batch_size):
        batch = [train_sections[i] for i in order[start:start + config.batch_size]]
        model.zero_grad()
        losses = [day_loss(model, s) for s in batch]
        loss = losses[0]
        for other in losses[1:]:
            loss = ad.add(loss, other)
        loss = ad.mul(loss, ad.Tensor(1.0 / len(losses)))
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDiverged(
                f"non-finite loss {value} in batch starting at step {steps}",
                batch_dates=[s.date for s in batch])
        ad.backward(loss)
        optimizer.step()
        total += value
        steps += 1
    return total / max(steps, 1)


def predictions_for(model: MovementModel, sections, clamp: float = 1e-9):
    """PredictionRecords for a list of day sections (no gradients kept)."""
    records = []
    for s in sections:
        probs = np.clip(model.predict_day(s.price, s.media, s.adj), clamp, 1 - clamp)
        for sym, p, y in zip(s.symbols, probs, s.labels):
            records.append(PredictionRecord(date=s.date, symbol=sym,
                                            probability=float(p),
                                            true_label=int(y)))
    return records


def evaluate_sections(model: MovementModel, sections, threshold: float = 0.5):
    """(f1, accuracy, mcc, confusion) on a section list."""
    records = predictions_for(model, sections)
    c = confusion(records, threshold=threshold) if records else ConfusionCounts()
    f1, acc = f1_accuracy(c)
    return f1, acc, mcc(c), c


def fit(model: MovementModel, train_sections, val_sections, config: TrainConfig,
        progress: bool = False):
    """Train with early stopping; returns (model at best val F1, history).

    fit never sees test data: callers pass only train and validation sections.
    """
    config.validate()
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    shuffle_rng = stream(config.seed, "shuffle")

    history: list[EpochRecord] = []
    best_f1 = -1.0
    best_state = None
    stall = 0
    for epoch in range(1, config.max_epochs + 1):
        train_loss = train_epoch(model, optimizer, train_sections, config, shuffle_rng)
        val_f1, val_acc, val_mcc, _ = evaluate_sections(model, val_sections,
                                                        threshold=config.threshold)
        history.append(EpochRecord(epoch, train_loss, val_f1, val_acc, val_mcc))
        if progress:
            logger.info("epoch %d loss %.4f val_f1 %.4f val_acc %.4f",
                        epoch, train_loss, val_f1, val_acc)
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_state = {k: t.data.copy() for k, t in model.parameters().items()}
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                break
    if best_state is not None:
        for name, t in model.parameters().items():
            t.data = best_state[name]
    return model, history


def write_history_csv(path, history) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_f1,val_acc,val_mcc\n")
        for rec in history:
            fh.write(f"{rec.epoch},{rec.train_loss!r},{rec.val_f1!r},"
                     f"{rec.val_acc!r},{rec.val_mcc!r}\n")
