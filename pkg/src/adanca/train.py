"""Mini-batch SGD with momentum, cosine decay and label smoothing."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numerics import functional as F
from .numerics.module import Module
from .numerics.rng import Rng


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 10
    batch_size: int = 64
    label_smoothing: float = 0.1
    warmup_epochs: float = 1.0
    clip_norm: float = 5.0
    min_lr: float = 0.0

    @classmethod
    def from_run(cls, run) -> "OptimConfig":
        v = run.values
        return cls(lr=v["optim.lr"], momentum=v["optim.momentum"], weight_decay=v["optim.weight_decay"],
                   epochs=v["optim.epochs"], batch_size=v["optim.batch_size"],
                   label_smoothing=v["optim.label_smoothing"], warmup_epochs=v["optim.warmup_epochs"],
                   clip_norm=v["optim.clip_norm"])


def lr_at(cfg: OptimConfig, step: int, total: int, warmup: int) -> float:
    if step < warmup:
        return cfg.lr * (step + 1) / warmup
    progress = (step - warmup) / max(1, total - warmup)
    return cfg.min_lr + 0.5 * (cfg.lr - cfg.min_lr) * (1 + math.cos(math.pi * progress))


class SGD:
    """Heavy-ball SGD; weight decay only touches matrices and kernels (ndim >= 2)."""

    def __init__(self, params, momentum: float, weight_decay: float):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float, clip_norm: float = 0.0) -> float:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        norm = math.sqrt(sum(float(np.square(g, dtype=np.float64).sum()) for g in grads))
        scale = clip_norm / norm if clip_norm and norm > clip_norm else 1.0
        for p, g, v in zip(self.params, grads, self.velocity):
            d = g * scale
            if self.weight_decay and p.ndim >= 2:
                d = d + self.weight_decay * p.data
            v *= self.momentum
            v += d
            p.data = (p.data - lr * v).astype(p.data.dtype)
            p.grad = None
        return norm


def train(model: Module, images: np.ndarray, labels: np.ndarray, cfg: OptimConfig, rng: Rng,
          log: Callable[[dict], None] | None = None, time_budget: float | None = None) -> list[dict]:
    """Train in place; returns one record per epoch (loss, train accuracy, lr, seconds)."""
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(images)
    steps_per_epoch = max(1, n // cfg.batch_size)
    total = steps_per_epoch * cfg.epochs
    warmup = int(round(cfg.warmup_epochs * steps_per_epoch))
    opt = SGD(model.parameters(), cfg.momentum, cfg.weight_decay)
    data_rng, model_rng = rng.spawn(1), rng.spawn(2)
    history, step, t0 = [], 0, time.time()
    model.train()
    for epoch in range(cfg.epochs):
        order = data_rng.permutation(n)
        loss_sum, hits, seen = 0.0, 0, 0
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            logits = model(images[idx], model_rng)
            loss = F.cross_entropy(logits, labels[idx], cfg.label_smoothing)
            loss.backward()
            lr = lr_at(cfg, step, total, warmup)
            opt.step(lr, cfg.clip_norm)
            step += 1
            loss_sum += float(loss.data) * len(idx)
            hits += int((logits.data.argmax(axis=1) == labels[idx]).sum())
            seen += len(idx)
        rec = {"epoch": epoch + 1, "loss": loss_sum / seen, "train_acc": 100.0 * hits / seen,
               "lr": lr, "seconds": time.time() - t0}
        history.append(rec)
        if log:
            log(rec)
        if time_budget is not None and time.time() - t0 > time_budget:
            break
    model.eval()
    return history
