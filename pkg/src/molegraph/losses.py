"""Masked multitask losses on the tape.

Classification losses work on raw logits through softplus so that extreme
logits stay finite: with z the logit and p = sigmoid(z),

    -log p      = softplus(-z)
    -log(1 - p) = softplus(z)
    (1-p)^gamma = exp(-gamma * softplus(z))     (and symmetrically for p^gamma)

Masked entries contribute exactly nothing to the value or any gradient: the
per-entry losses are multiplied by the 0/1 mask before the mean.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AllMasked, NegativeGamma, SizeMismatch


@dataclass
class TaskLabels:
    """Per-graph, per-task labels with a 1 = present / 0 = missing mask."""

    y: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.float64)
        if self.y.shape != self.mask.shape:
            raise SizeMismatch(f"labels {self.y.shape} vs mask {self.mask.shape}")

    @property
    def active_count(self):
        return float(self.mask.sum())


@dataclass
class FocalLossConfig:
    gamma: float = 2.0


def _masked_mean(tape, per_entry, mask):
    count = float(mask.sum())
    if count == 0:
        raise AllMasked("every label entry is masked out")
    return tape.scale(tape.sum(tape.mul_const(per_entry, mask)), 1.0 / count)


def cross_entropy(tape, logits, labels):
    """Mean sigmoid cross entropy over active entries, stable logit form."""
    per = tape.sub(tape.softplus(logits), tape.mul_const(logits, labels.y))
    return _masked_mean(tape, per, labels.mask)


def focal_loss(tape, logits, labels, cfg):
    """Cross entropy damped by the (1-p)^gamma / p^gamma modulating factors.

    gamma = 0 reduces to cross entropy; the factor is differentiated through,
    not treated as a constant weight.
    """
    gamma = float(cfg.gamma)
    if gamma < 0:
        raise NegativeGamma(f"gamma must be >= 0, got {gamma}")
    sp_pos = tape.softplus(logits)            # -log(1-p)
    sp_neg = tape.softplus(tape.neg(logits))  # -log p
    pos_term = tape.mul(tape.exp(tape.scale(sp_pos, -gamma)), sp_neg)
    neg_term = tape.mul(tape.exp(tape.scale(sp_neg, -gamma)), sp_pos)
    per = tape.add(
        tape.mul_const(pos_term, labels.y),
        tape.mul_const(neg_term, 1.0 - labels.y),
    )
    return _masked_mean(tape, per, labels.mask)


def mse_loss(tape, pred, labels):
    """Mean squared error over active entries (normalized-target space)."""
    diff = tape.sub(pred, tape.const(labels.y))
    return _masked_mean(tape, tape.mul(diff, diff), labels.mask)
