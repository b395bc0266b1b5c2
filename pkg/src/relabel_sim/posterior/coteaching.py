"""Co-teaching with two softmax heads and a bootstrap ensemble of heads."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .softmax import (SoftmaxHead, SoftmaxHeadConfig, _epoch_batches, check_training_inputs,
                      clamp_logits, fit_softmax_head, full_loss, sgd_step, smoothed_targets)


@dataclass(frozen=True)
class CoTeachingConfig:
    head_config: SoftmaxHeadConfig = SoftmaxHeadConfig()
    drop_rate: float = 0.2
    warmup_epochs: int = 10
    seeds: tuple = (0, 1)

    def __post_init__(self):
        if not 0 <= self.drop_rate < 1:
            raise ValueError("drop_rate must lie in [0, 1)")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be non-negative")
        if len(self.seeds) != 2:
            raise ValueError("co-teaching needs exactly two seeds")


@dataclass
class HeadEnsemble:
    """Equal-weight average of several softmax heads."""

    members: list

    def predict_members(self, x) -> np.ndarray:
        return np.stack([m.predict_proba(x) for m in self.members])

    def predict_proba(self, x) -> np.ndarray:
        return self.predict_members(x).mean(axis=0)


def _per_sample_loss(head: SoftmaxHead, x, targets) -> np.ndarray:
    z = x @ head.weights.T + head.bias
    g = clamp_logits(z, head.alpha)
    g = g - g.max(axis=1, keepdims=True)
    logp = g - np.log(np.exp(g).sum(axis=1, keepdims=True))
    return -(targets * logp).sum(axis=1)


def _small_loss(peer: SoftmaxHead, x, targets, keep: int) -> np.ndarray:
    """Positions of the ``keep`` smallest-loss rows under ``peer`` (stable on ties)."""
    loss = _per_sample_loss(peer, x, targets)
    return np.sort(np.argsort(loss, kind="stable")[:keep])


def fit_co_teaching(x, labels, cfg: CoTeachingConfig = CoTeachingConfig(),
                    num_classes: Optional[int] = None, init: Optional[HeadEnsemble] = None,
                    epochs: Optional[int] = None, rngs=None, warmup: Optional[int] = None) -> HeadEnsemble:
    """Train two heads that pick each other's training rows.

    After warm-up, each head's step on its own mini-batch only uses the
    ``1 - drop_rate`` fraction of rows with the smallest loss under the
    other head. With ``drop_rate == 0`` this is exactly two independent
    softmax heads.
    """
    hc = cfg.head_config
    labels = np.asarray(labels, dtype=np.int64)
    C = num_classes if num_classes is not None else int(labels.max()) + 1
    x, y = check_training_inputs(x, labels, C)
    targets = smoothed_targets(y, C, hc.label_smoothing)
    if init is not None:
        heads = [m.copy() for m in init.members]
    else:
        heads = [SoftmaxHead.zeros(C, x.shape[1], hc.logit_clamp_alpha) for _ in range(2)]
    rngs = rngs if rngs is not None else [np.random.default_rng(s) for s in cfg.seeds]
    step_cfg = [replace(hc, seed=s) for s in cfg.seeds]
    warmup = cfg.warmup_epochs if warmup is None else warmup
    n_epochs = hc.epochs if epochs is None else epochs
    for h, c in zip(heads, step_cfg):
        h.loss_history = [full_loss(h, x, targets, c)]
    for epoch in range(n_epochs):
        batches = [_epoch_batches(len(x), hc.batch_size, r) for r in rngs]
        exchange = epoch >= warmup and cfg.drop_rate > 0
        for b0, b1 in zip(*batches):
            picked = []
            for me, batch in ((0, b0), (1, b1)):
                keep = int(round((1.0 - cfg.drop_rate) * len(batch)))
                if exchange and keep < len(batch):
                    peer = heads[1 - me]
                    batch = batch[_small_loss(peer, x[batch], targets[batch], max(keep, 1))]
                picked.append(batch)
            for h, c, batch in zip(heads, step_cfg, picked):
                sgd_step(h, x[batch], targets[batch], c)
        for h, c in zip(heads, step_cfg):
            h.loss_history.append(full_loss(h, x, targets, c))
    return HeadEnsemble(heads)


def fit_ensemble(x, labels, cfg: SoftmaxHeadConfig = SoftmaxHeadConfig(), members: int = 5,
                 seed: int = 0, num_classes: Optional[int] = None, bootstrap: bool = True,
                 seeds: Optional[Sequence[int]] = None) -> "BootstrapEnsemble":
    """``members`` softmax heads, each fit on its own bootstrap resample.

    Member seeds are spawned from ``seed`` unless given explicitly; each
    member's seed drives both its resample and its batch order.
    """
    if members < 2:
        raise ValueError("an ensemble needs at least 2 members")
    labels = np.asarray(labels, dtype=np.int64)
    C = num_classes if num_classes is not None else int(labels.max()) + 1
    x, y = check_training_inputs(x, labels, C)
    if seeds is None:
        seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(members)]
    if len(seeds) != members:
        raise ValueError("need one seed per member")
    heads, rows, rngs = [], [], []
    for s in seeds:
        rng = np.random.default_rng(s)
        idx = _bootstrap_rows(y, C, rng) if bootstrap else np.arange(len(y))
        heads.append(fit_softmax_head(x[idx], y[idx], replace(cfg, seed=s), num_classes=C, rng=rng))
        rows.append(idx)
        rngs.append(rng)
    return BootstrapEnsemble(heads, rows, rngs)


def _bootstrap_rows(y, num_classes: int, rng, attempts: int = 100) -> np.ndarray:
    # redraw when a class goes missing from the resample
    for _ in range(attempts):
        idx = rng.integers(0, len(y), len(y))
        if len(np.unique(y[idx])) == num_classes:
            return idx
    raise ValueError("bootstrap resamples keep dropping a class; dataset too small")


@dataclass
class BootstrapEnsemble(HeadEnsemble):
    rows: list = field(default_factory=list)
    rngs: list = field(default_factory=list)
