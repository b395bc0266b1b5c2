"""Linear softmax head trained on fixed embeddings.

Logits pass through ``alpha * tanh(z / alpha)`` both at training and at
prediction time, targets are label-smoothed, and the weights (not the bias)
carry an L2 penalty.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import log_softmax, softmax


@dataclass(frozen=True)
class SoftmaxHeadConfig:
    learning_rate: float = 0.5
    epochs: int = 60
    weight_decay: float = 1e-3
    label_smoothing: float = 0.1
    logit_clamp_alpha: float = 20.0
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must lie in [0, 1)")
        if self.logit_clamp_alpha <= 0:
            raise ValueError("logit_clamp_alpha must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


def smoothed_targets(labels, num_classes: int, eps: float) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64)
    t = np.full((len(y), num_classes), eps / num_classes)
    t[np.arange(len(y)), y] += 1.0 - eps
    return t


def clamp_logits(z, alpha: float):
    return alpha * np.tanh(z / alpha)


def loss_and_grad(weights, bias, x, targets, alpha: float, weight_decay: float):
    """Mean smoothed cross-entropy plus ``weight_decay / 2 * ||W||^2``.

    Returns ``(loss, grad_weights, grad_bias)``.
    """
    n = len(x)
    z = x @ weights.T + bias
    t = np.tanh(z / alpha)
    g = alpha * t
    logp = log_softmax(g, axis=1)
    loss = -(targets * logp).sum() / n + 0.5 * weight_decay * np.sum(weights**2)
    dg = (np.exp(logp) - targets) / n
    dz = dg * (1.0 - t**2)
    grad_w = dz.T @ x + weight_decay * weights
    grad_b = dz.sum(axis=0)
    return loss, grad_w, grad_b


@dataclass
class SoftmaxHead:
    weights: np.ndarray  # (C, L)
    bias: np.ndarray  # (C,)
    alpha: float = 20.0
    loss_history: list = field(default_factory=list)

    @classmethod
    def zeros(cls, num_classes: int, dim: int, alpha: float = 20.0) -> "SoftmaxHead":
        return cls(np.zeros((num_classes, dim)), np.zeros(num_classes), alpha)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def logits(self, x) -> np.ndarray:
        """Clamped logits; every entry lies in ``[-alpha, alpha]``."""
        z = np.asarray(x, dtype=float) @ self.weights.T + self.bias
        return clamp_logits(z, self.alpha)

    def predict_proba(self, x) -> np.ndarray:
        return softmax(self.logits(x), axis=1)

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def copy(self) -> "SoftmaxHead":
        return SoftmaxHead(self.weights.copy(), self.bias.copy(), self.alpha, list(self.loss_history))

    def to_csv(self, path):
        """Row per class: ``class, w_0 .. w_{L-1}, bias`` (full float precision)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class"] + [f"w_{j}" for j in range(self.weights.shape[1])] + ["bias"])
            for c in range(self.num_classes):
                w.writerow([c] + [repr(float(v)) for v in self.weights[c]] + [repr(float(self.bias[c]))])

    @classmethod
    def from_csv(cls, path, alpha: float = 20.0) -> "SoftmaxHead":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        rows.sort(key=lambda r: int(r[0]))
        vals = np.array([[float(v) for v in r[1:]] for r in rows])
        return cls(vals[:, :-1].copy(), vals[:, -1].copy(), alpha)


def check_training_inputs(x, labels, num_classes: int):
    x = np.asarray(x, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("embeddings must be (N, L) with one label per row")
    if not np.all(np.isfinite(x)):
        bad = np.flatnonzero(~np.isfinite(x).all(axis=1))
        raise ValueError(f"non-finite embeddings at rows {bad[:10].tolist()}")
    if np.any((y < 0) | (y >= num_classes)):
        raise ValueError("labels out of range")
    missing = sorted(set(range(num_classes)) - set(np.unique(y).tolist()))
    if missing:
        raise ValueError(f"classes {missing} absent from the training labels")
    return x, y


def _epoch_batches(n: int, batch_size: int, rng) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def sgd_step(head: SoftmaxHead, x, targets, cfg: SoftmaxHeadConfig):
    _, gw, gb = loss_and_grad(head.weights, head.bias, x, targets, cfg.logit_clamp_alpha, cfg.weight_decay)
    head.weights -= cfg.learning_rate * gw
    head.bias -= cfg.learning_rate * gb


def full_loss(head: SoftmaxHead, x, targets, cfg: SoftmaxHeadConfig) -> float:
    return loss_and_grad(head.weights, head.bias, x, targets, cfg.logit_clamp_alpha, cfg.weight_decay)[0]


def fit_softmax_head(x, labels, cfg: SoftmaxHeadConfig = SoftmaxHeadConfig(),
                     num_classes: Optional[int] = None, init: Optional[SoftmaxHead] = None,
                     epochs: Optional[int] = None, rng=None) -> SoftmaxHead:
    """Mini-batch gradient descent on the regularised, clamped softmax loss.

    Weights start at zero unless ``init`` is given (warm start). The seed only
    drives the mini-batch order. ``loss_history`` records the full-data loss
    before training and after each epoch.
    """
    labels = np.asarray(labels, dtype=np.int64)
    C = num_classes if num_classes is not None else (init.num_classes if init is not None
                                                     else int(labels.max()) + 1)
    x, y = check_training_inputs(x, labels, C)
    head = init.copy() if init is not None else SoftmaxHead.zeros(C, x.shape[1], cfg.logit_clamp_alpha)
    head.alpha = cfg.logit_clamp_alpha
    targets = smoothed_targets(y, C, cfg.label_smoothing)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    head.loss_history = [full_loss(head, x, targets, cfg)]
    for _ in range(cfg.epochs if epochs is None else epochs):
        for idx in _epoch_batches(len(x), cfg.batch_size, rng):
            sgd_step(head, x[idx], targets[idx], cfg)
        head.loss_history.append(full_loss(head, x, targets, cfg))
    return head


def with_seed(cfg: SoftmaxHeadConfig, seed: int) -> SoftmaxHeadConfig:
    return replace(cfg, seed=seed)
