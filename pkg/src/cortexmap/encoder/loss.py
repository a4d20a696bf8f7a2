"""Supervised contrastive loss on unit-normalized projections."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, exp, log, matmul, transpose, tsum


def supcon_loss(z: Tensor, labels: np.ndarray, temperature: float) -> Tensor:
    """Mean per-anchor contrastive loss over a batch of unit vectors.

    For each anchor i, positives are the other batch elements with the same
    label; each positive's log-probability against all non-anchor elements
    is averaged. Anchors without positives contribute 0.
    """
    labels = np.asarray(labels)
    n = z.shape[0]
    if n < 2:
        raise ValueError("supcon_loss needs a batch of at least 2")
    if labels.shape[0] != n:
        raise ValueError(f"got {labels.shape[0]} labels for {n} projections")
    norms = np.linalg.norm(z.data, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-3):
        worst = int(np.argmax(np.abs(norms - 1.0)))
        raise ValueError(
            f"projections must be unit-norm: row {worst} has norm {norms[worst]:.6f}"
        )

    sim = matmul(z, transpose(z)) * (1.0 / temperature)

    off_diag = (1.0 - np.eye(n)).astype(z.dtype)
    pos_mask = ((labels[:, None] == labels[None, :]).astype(z.dtype)) * off_diag
    pos_counts = pos_mask.sum(axis=1)

    # stabilizing shift: per-row max over non-anchor entries (constant wrt z)
    shift = np.where(off_diag > 0, sim.data, -np.inf).max(axis=1, keepdims=True)
    sim_shifted = sim - Tensor(shift.astype(z.dtype))
    exps = exp(sim_shifted) * Tensor(off_diag)
    log_denom = log(tsum(exps, axis=1, keepdims=True))
    log_prob = sim_shifted - log_denom

    weights = np.zeros_like(pos_mask)
    nonzero = pos_counts > 0
    weights[nonzero] = pos_mask[nonzero] / pos_counts[nonzero, None]
    loss = tsum(log_prob * Tensor(-weights / n))
    return loss


def supcon_loss_bruteforce(z: np.ndarray, labels: np.ndarray,
                           temperature: float) -> float:
    """Double-loop reference evaluation, independent of the vectorized path."""
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    n = z.shape[0]
    total = 0.0
    for i in range(n):
        positives = [j for j in range(n) if j != i and labels[j] == labels[i]]
        if not positives:
            continue
        li = 0.0
        for j in positives:
            denom = sum(
                np.exp(np.dot(z[i], z[k]) / temperature) for k in range(n) if k != i
            )
            li += np.log(np.exp(np.dot(z[i], z[j]) / temperature) / denom)
        total += -li / len(positives)
    return total / n
