"""Initial noisy-label generation.

Four models are supported: temperature-scaled sampling from the true label
distribution, symmetric flips, class-dependent flips and instance-dependent
noise (IDN). Every draw for a sample is a function of ``(seed, sample id)``
only, so results do not depend on sample order or on which subset is noised.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import softmax

from .core import DatasetState, validate_distribution

KINDS = ("temperature", "symmetric", "class_dependent", "idn")

# stream tags keep independent uses of one seed apart
_TAG_LABELS = 11
_TAG_IDN_WEIGHTS = 12


@dataclass
class NoiseSpec:
    kind: str
    tau: float = 1.0
    rate: float = 0.0
    confusion_bias: Optional[np.ndarray] = None
    seed: int = 0
    mask_true_class: bool = True

    def __post_init__(self):
        self.kind = self.kind.lower().replace("-", "_")
        if self.kind == "instance_dependent":
            self.kind = "idn"
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "temperature" and self.tau < 1:
            raise ValueError("temperature tau must be >= 1")
        if self.kind != "temperature" and not 0.0 <= self.rate < 1.0:
            raise ValueError("noise rate must lie in [0, 1)")
        if self.kind == "class_dependent":
            if self.confusion_bias is None:
                raise ValueError("class_dependent noise needs a confusion_bias matrix")
            self.confusion_bias = np.asarray(self.confusion_bias, dtype=float)
            validate_distribution(self.confusion_bias, "confusion_bias rows")


@dataclass
class IdnModel:
    """Per-class projection weights of the instance-dependent noise model.

    ``weights[c]`` is the ``(C, L)`` matrix mapping an embedding of a class-``c``
    sample to flip logits.
    """

    weights: np.ndarray
    rate: float

    @classmethod
    def draw(cls, num_classes: int, embedding_dim: int, rate: float, seed: int) -> "IdnModel":
        rng = np.random.default_rng([_TAG_IDN_WEIGHTS, seed])
        return cls(rng.standard_normal((num_classes, num_classes, embedding_dim)), rate)

    def transitions(self, embeddings, clean_labels, mask_true_class: bool = True) -> np.ndarray:
        x = np.asarray(embeddings, dtype=float)
        y = np.asarray(clean_labels, dtype=np.int64)
        n, C = len(y), self.weights.shape[0]
        logits = np.einsum("ncl,nl->nc", self.weights[y], x)
        rows = np.arange(n)
        if mask_true_class:
            logits[rows, y] = -np.inf
        flip = softmax(logits, axis=1)
        trans = self.rate * flip
        trans[rows, y] += 1.0 - self.rate
        return trans


@dataclass
class NoiseReport:
    kind: str
    realized_rate: float
    confusion: np.ndarray  # rows: clean class, columns: assigned label
    transitions: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)


def per_id_uniforms(ids, seed: int, tag: int = _TAG_LABELS) -> np.ndarray:
    """One U[0,1) value per sample id, fixed by ``(seed, tag, id)``.

    Ids up to ``4N + 1e6`` index one shared stream; sparser id sets fall back
    to a per-id stream, so the two regimes give different values for one id.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        return np.zeros(0)
    top = int(ids.max())
    if top < 4 * len(ids) + 1_000_000:
        rng = np.random.default_rng([tag, seed])
        return rng.random(top + 1)[ids]
    # sparse id space: one stream per id
    return np.array([np.random.default_rng([tag, seed, int(i)]).random() for i in ids])


def _inverse_cdf(rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(rows, axis=1)
    labels = (u[:, None] >= cdf).sum(axis=1)
    # u beyond a rounded-down cdf total: fall back to the last class with mass
    over = labels >= rows.shape[1]
    if np.any(over):
        last = rows.shape[1] - 1 - np.argmax(rows[over][:, ::-1] > 0, axis=1)
        labels[over] = last
    return labels


def temperature_scale(probs, tau: float) -> np.ndarray:
    """Distribution proportional to ``p ** (1 / tau)``; zeros stay zero."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    p = np.asarray(probs, dtype=float)
    if tau == 1:
        return p.copy()
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    scaled = softmax(logp / tau, axis=-1)
    return np.where(p > 0, scaled, 0.0)


def sample_initial_labels(true_dists, ids, tau: float, seed: int) -> np.ndarray:
    """Draw one label per sample from its temperature-scaled true distribution."""
    scaled = temperature_scale(true_dists, tau)
    return _inverse_cdf(np.atleast_2d(scaled), per_id_uniforms(ids, seed))


def realized_noise_rate(labels, true_dists) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        return 0.0
    return float(np.mean(labels != np.argmax(true_dists, axis=1)))


def symmetric_transition(num_classes: int, rate: float) -> np.ndarray:
    C = int(num_classes)
    if C < 2:
        raise ValueError("need at least 2 classes")
    if not 0.0 <= rate < (C - 1) / C:
        raise ValueError(f"rate {rate} breaks diagonal dominance for C={C}; "
                         f"must be in [0, {(C - 1) / C:.6g})")
    T = np.full((C, C), rate / (C - 1))
    np.fill_diagonal(T, 1.0 - rate)
    return T


def class_dependent_transition(num_classes: int, rate: float, confusion_bias) -> np.ndarray:
    """Row ``y`` is ``(1 - rate) e_y + rate * bias_y`` with the bias diagonal removed."""
    C = int(num_classes)
    if not 0.0 <= rate < 1.0:
        raise ValueError("rate must lie in [0, 1)")
    bias = validate_distribution(confusion_bias, "confusion_bias rows").copy()
    if bias.shape != (C, C):
        raise ValueError(f"confusion_bias must be {C}x{C}")
    np.fill_diagonal(bias, 0.0)
    off = bias.sum(axis=1, keepdims=True)
    if np.any(off <= 0):
        rows = np.flatnonzero(off[:, 0] <= 0).tolist()
        raise ValueError(f"confusion_bias rows {rows} have no off-diagonal mass")
    T = rate * bias / off
    T[np.diag_indices(C)] += 1.0 - rate
    return T


def idn_transitions(embeddings, clean_labels, num_classes: int, rate: float, seed: int,
                    mask_true_class: bool = True) -> np.ndarray:
    """Per-sample transition rows of the instance-dependent noise model."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("rate must lie in [0, 1)")
    x = np.asarray(embeddings, dtype=float)
    model = IdnModel.draw(num_classes, x.shape[1], rate, seed)
    return model.transitions(x, clean_labels, mask_true_class=mask_true_class)


def apply_transition_noise(clean_labels, ids, transitions, seed: int,
                           per_sample: Optional[bool] = None) -> np.ndarray:
    """Draw each label from the transition row of its clean class.

    ``transitions`` is either one shared ``(C, C)`` matrix or one ``(N, C)``
    row per sample. The shape decides unless ``per_sample`` is given, which
    is only needed when N == C.
    """
    y = np.asarray(clean_labels, dtype=np.int64)
    T = np.asarray(transitions, dtype=float)
    if per_sample is None:
        per_sample = T.shape[0] == len(y) and T.shape[0] != T.shape[1]
    rows = T if per_sample else T[y]
    return _inverse_cdf(rows, per_id_uniforms(ids, seed))


def confusion_counts(clean_labels, labels, num_classes: int) -> np.ndarray:
    M = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(M, (np.asarray(clean_labels), np.asarray(labels)), 1)
    return M


def inject_noise(state: DatasetState, spec: NoiseSpec) -> tuple[DatasetState, NoiseReport]:
    """Return a copy of ``state`` with one-hot initial labels drawn per ``spec``."""
    C = state.num_classes
    clean = state.true_labels()
    transitions = None
    if spec.kind == "temperature":
        labels = sample_initial_labels(state.true_dists, state.ids, spec.tau, spec.seed)
    else:
        if spec.kind == "symmetric":
            transitions = symmetric_transition(C, spec.rate)
        elif spec.kind == "class_dependent":
            transitions = class_dependent_transition(C, spec.rate, spec.confusion_bias)
        else:
            transitions = idn_transitions(state.embeddings, clean, C, spec.rate, spec.seed,
                                          mask_true_class=spec.mask_true_class)
        labels = apply_transition_noise(clean, state.ids, transitions, spec.seed,
                                        per_sample=spec.kind == "idn")
    report = NoiseReport(kind=spec.kind,
                         realized_rate=realized_noise_rate(labels, state.true_dists),
                         confusion=confusion_counts(clean, labels, C),
                         transitions=transitions)
    return state.with_labels(labels), report
