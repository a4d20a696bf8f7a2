"""Contrastive training loop for the patch encoders."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..autodiff import LARS, SGDNesterov, Tape, Tensor, backward, sqrt, tsum
from .architectures import EncoderConfig, build_encoder
from .augment import AugmentationConfig, augment
from .loss import supcon_loss


@dataclass
class EncoderSchedule:
    epochs: int = 20
    batch_size: int = 64
    optimizer: str = "lars"  # "lars" or "sgd"
    base_lr: float = 0.01
    reference_batch: int = 128  # lr = base_lr * batch_size / reference_batch
    momentum: float = 0.9
    trust_coefficient: float = 0.001
    patches_per_class: Optional[int] = None  # None: size of the largest class
    seed: int = 0

    def learning_rate(self) -> float:
        return self.base_lr * self.batch_size / self.reference_batch


@dataclass
class EncoderTrainResult:
    f: object
    g: object
    loss_curve: list = field(default_factory=list)


def normalize_rows(x: Tensor) -> Tensor:
    """Differentiable unit-normalization of each row."""
    norm = sqrt(tsum(x * x, axis=1, keepdims=True) + 1e-12)
    return x / norm


def train_encoder(patches: np.ndarray, labels: np.ndarray, config: EncoderConfig,
                  schedule: EncoderSchedule,
                  aug: Optional[AugmentationConfig] = None,
                  verbose: bool = False) -> EncoderTrainResult:
    """Train (f, g) with the contrastive loss; g is kept only for inspection.

    `patches` is (M, S, S) in [0, 1]; `labels` integer class per patch.
    Classes are balanced by oversampling each class to the same count per
    epoch. Raises if any class in [0, max(labels)] has no patches.
    """
    patches = np.asarray(patches)
    labels = np.asarray(labels)
    n_classes = int(labels.max()) + 1
    by_class = [np.flatnonzero(labels == c) for c in range(n_classes)]
    for c, idx in enumerate(by_class):
        if idx.size == 0:
            raise ValueError(f"class {c} has no patches; cannot balance")
    per_class = schedule.patches_per_class or max(idx.size for idx in by_class)

    rng = np.random.default_rng(schedule.seed)
    f, g = build_encoder(config, rng)
    params = [p for _, p in f.params()] + [p for _, p in g.params()]
    lr = schedule.learning_rate()
    if schedule.optimizer == "lars":
        opt = LARS(params, lr, momentum=schedule.momentum,
                   trust_coefficient=schedule.trust_coefficient)
    elif schedule.optimizer == "sgd":
        opt = SGDNesterov(params, lr, momentum=schedule.momentum)
    else:
        raise ValueError(f"unknown optimizer {schedule.optimizer!r}")

    dtype = config.np_dtype
    loss_curve = []
    for epoch in range(schedule.epochs):
        order = np.concatenate([
            rng.choice(idx, size=per_class, replace=idx.size < per_class)
            for idx in by_class
        ])
        rng.shuffle(order)
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order) - 1, schedule.batch_size):
            batch_idx = order[start:start + schedule.batch_size]
            if batch_idx.size < 2:
                continue
            xb = patches[batch_idx].astype(dtype)
            if aug is not None:
                xb = np.stack([augment(p, aug, rng) for p in xb]).astype(dtype)
            xb = xb[:, None, :, :]  # single channel
            yb = labels[batch_idx]
            opt.zero_grad()
            with Tape() as tape:
                h = f.forward(Tensor(xb), train=True)
                z = normalize_rows(g.forward(h, train=True))
                loss = supcon_loss(z, yb, config.temperature)
            backward(tape, loss)
            opt.step()
            epoch_loss += loss.item()
            n_batches += 1
        loss_curve.append(epoch_loss / max(n_batches, 1))
        if verbose:
            print(f"encoder epoch {epoch + 1}/{schedule.epochs}: "
                  f"loss {loss_curve[-1]:.4f}")
    return EncoderTrainResult(f=f, g=g, loss_curve=loss_curve)
