"""Domain types and information-theoretic primitives.

Distributions and count vectors are plain numpy arrays. Every primitive
accepts a single vector of length C or a stack of them (``(..., C)``) and
reduces over the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

#: Floor applied to posterior probabilities inside logarithms.
LOG_FLOOR = 1e-12
DIST_ATOL = 1e-9


def validate_distribution(probs, name: str = "distribution") -> np.ndarray:
    """Return ``probs`` as a float array after checking it is a valid distribution."""
    p = np.asarray(probs, dtype=float)
    if p.shape[-1] < 2:
        raise ValueError(f"{name} needs at least 2 classes, got {p.shape[-1]}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError(f"{name} has entries outside [0, 1]")
    if not np.allclose(p.sum(axis=-1), 1.0, rtol=0, atol=DIST_ATOL):
        raise ValueError(f"{name} does not sum to 1")
    return p


def entropy(probs) -> np.ndarray | float:
    """Shannon entropy in nats, with 0 ln 0 = 0."""
    p = np.asarray(probs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    h = -terms.sum(axis=-1)
    # -0.0 for one-hot inputs
    h = np.maximum(h, 0.0)
    return float(h) if np.ndim(h) == 0 else h


def normalized_entropy(probs) -> np.ndarray | float:
    """Entropy divided by ln C, i.e. entropy with logarithm base C."""
    p = np.asarray(probs, dtype=float)
    h = np.asarray(entropy(p)) / np.log(p.shape[-1])
    h = np.clip(h, 0.0, 1.0)
    return float(h) if np.ndim(h) == 0 else h


@dataclass(frozen=True)
class DifficultyConfig:
    threshold: float = 0.3

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("difficulty threshold must lie strictly in (0, 1)")


def is_difficult(probs, cfg: DifficultyConfig = DifficultyConfig()):
    """True where the normalized entropy strictly exceeds the threshold."""
    flags = np.asarray(normalized_entropy(probs)) > cfg.threshold
    return bool(flags) if flags.ndim == 0 else flags


def normalize_counts(counts) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    total = c.sum(axis=-1, keepdims=True)
    if np.any(total < 1):
        raise ValueError("label counts must contain at least one label")
    return c / total


def cross_entropy(counts, posterior, floor: float = LOG_FLOOR):
    """Cross-entropy from the normalised label counts to ``posterior``."""
    q = normalize_counts(counts)
    logp = np.log(np.maximum(np.asarray(posterior, dtype=float), floor))
    ce = -(q * logp).sum(axis=-1)
    return float(ce) if np.ndim(ce) == 0 else ce


def majority_label(counts):
    """Argmax of the label counts; ties go to the lowest class index."""
    c = np.asarray(counts)
    if np.any(c.sum(axis=-1) < 1):
        raise ValueError("label counts must contain at least one label")
    lab = np.argmax(c, axis=-1)
    return int(lab) if np.ndim(lab) == 0 else lab


def has_majority(counts):
    """True when the largest count is strictly greater than every other count."""
    c = np.asarray(counts)
    top = c.max(axis=-1)
    unique = (c == top[..., None]).sum(axis=-1) == 1
    flags = unique & (top > 0)
    return bool(flags) if np.ndim(flags) == 0 else flags


@dataclass
class Sample:
    id: int
    embedding: np.ndarray
    true_dist: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=float)
        self.true_dist = validate_distribution(self.true_dist, f"true_dist of sample {self.id}")
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != self.true_dist.shape:
            raise ValueError(f"sample {self.id}: counts and true_dist lengths differ")
        if np.any(self.counts < 0):
            raise ValueError(f"sample {self.id}: negative label counts")


@dataclass
class DatasetState:
    """Sample definitions plus the mutable label-count state.

    Samples are stored column-wise and sorted by id, so position order and
    ascending-id order coincide. ``counts`` and ``cleaned`` are the only
    fields that change during a simulation.
    """

    ids: np.ndarray
    embeddings: np.ndarray
    true_dists: np.ndarray
    counts: np.ndarray
    cleaned: np.ndarray = field(default=None)

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        order = np.argsort(ids, kind="stable")
        self.ids = ids[order]
        if len(self.ids) and self.ids[0] < 0:
            raise ValueError("sample ids must be non-negative")
        if np.any(np.diff(self.ids) == 0):
            raise ValueError("sample ids must be unique")
        self.embeddings = np.asarray(self.embeddings, dtype=float)[order]
        if self.embeddings.ndim != 2 or len(self.embeddings) != len(self.ids):
            raise ValueError("embeddings must be an (N, L) array")
        self.true_dists = validate_distribution(np.asarray(self.true_dists, dtype=float)[order],
                                                "true distributions")
        self.counts = np.asarray(self.counts, dtype=np.int64)[order].copy()
        if self.counts.shape != self.true_dists.shape:
            raise ValueError("counts must be an (N, C) array matching true_dists")
        if np.any(self.counts < 0):
            raise ValueError("label counts must be non-negative")
        if self.cleaned is None:
            self.cleaned = np.zeros(len(self.ids), dtype=bool)
        else:
            self.cleaned = np.asarray(self.cleaned, dtype=bool)[order].copy()

    @classmethod
    def from_samples(cls, samples: Iterable[Sample], cleaned: Iterable[int] = ()) -> "DatasetState":
        samples = list(samples)
        if not samples:
            raise ValueError("a dataset needs at least one sample")
        dims = {s.embedding.shape for s in samples}
        if len(dims) != 1:
            raise ValueError("all embeddings must share one length")
        ids = np.array([s.id for s in samples])
        cleaned = set(cleaned)
        return cls(ids=ids,
                   embeddings=np.stack([s.embedding for s in samples]),
                   true_dists=np.stack([s.true_dist for s in samples]),
                   counts=np.stack([s.counts for s in samples]),
                   cleaned=np.array([i in cleaned for i in ids]))

    @property
    def num_samples(self) -> int:
        return len(self.ids)

    @property
    def num_classes(self) -> int:
        return self.true_dists.shape[1]

    @property
    def embedding_dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def samples(self) -> list[Sample]:
        return [Sample(int(i), e, p, c) for i, e, p, c in
                zip(self.ids, self.embeddings, self.true_dists, self.counts)]

    @property
    def available(self) -> set[int]:
        return set(self.ids[~self.cleaned].tolist())

    @property
    def cleaned_ids(self) -> set[int]:
        return set(self.ids[self.cleaned].tolist())

    def position(self, sample_id: int) -> int:
        pos = int(np.searchsorted(self.ids, sample_id))
        if pos >= len(self.ids) or self.ids[pos] != sample_id:
            raise KeyError(f"unknown sample id {sample_id}")
        return pos

    def is_labelled(self) -> bool:
        return bool(np.all(self.counts.sum(axis=1) >= 1))

    def require_labelled(self):
        if not self.is_labelled():
            missing = self.ids[self.counts.sum(axis=1) < 1]
            raise ValueError(f"samples without any label: {missing[:10].tolist()}")

    def majority_labels(self) -> np.ndarray:
        return majority_label(self.counts)

    def true_labels(self) -> np.ndarray:
        return np.argmax(self.true_dists, axis=1)

    def mislabelled(self) -> np.ndarray:
        return self.majority_labels() != self.true_labels()

    def with_counts(self, counts) -> "DatasetState":
        return DatasetState(self.ids, self.embeddings, self.true_dists, counts, self.cleaned)

    def with_labels(self, labels: Sequence[int]) -> "DatasetState":
        """Copy whose counts are one-hot at ``labels`` (one per position)."""
        labels = np.asarray(labels, dtype=np.int64)
        counts = np.zeros_like(self.counts)
        counts[np.arange(self.num_samples), labels] = 1
        return DatasetState(self.ids, self.embeddings, self.true_dists, counts)

    def copy(self) -> "DatasetState":
        return DatasetState(self.ids, self.embeddings, self.true_dists, self.counts, self.cleaned)
