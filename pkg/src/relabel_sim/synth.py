"""Gaussian-mixture benchmark with exact label distributions.

Each class is an isotropic Gaussian around a vertex of a regular simplex.
A sample's true label distribution is the Bayes posterior of the mixture at
its embedding, so points near a decision boundary are ambiguous by
construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .core import DatasetState, Sample
from .noise import NoiseSpec, inject_noise


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 4
    samples_per_class: int = 500
    embedding_dim: int = 16
    cluster_spread: float = 1.0
    class_center_separation: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.samples_per_class < 1 or self.embedding_dim < 1:
            raise ValueError("samples_per_class and embedding_dim must be positive")
        if self.embedding_dim < self.num_classes - 1:
            raise ValueError("embedding_dim must be at least num_classes - 1 to host the simplex")
        if self.cluster_spread < 0 or self.class_center_separation <= 0:
            raise ValueError("cluster_spread must be >= 0 and separation > 0")


def class_centers(num_classes: int, embedding_dim: int, separation: float) -> np.ndarray:
    """Vertices of a regular simplex with the given pairwise distance."""
    C = num_classes
    # centred basis vectors span a (C-1)-dim subspace; express them in an orthonormal basis of it
    E = np.eye(C) - 1.0 / C
    u, s, _ = np.linalg.svd(E)
    coords = E @ u[:, : C - 1]
    coords *= separation / np.sqrt(2.0)
    centers = np.zeros((C, embedding_dim))
    centers[:, : C - 1] = coords
    return centers


def mixture_posterior(points, centers, sigma: float) -> np.ndarray:
    """Bayes posterior of an equal-weight isotropic mixture at ``points``."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    centers = np.asarray(centers, dtype=float)
    sq = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    if sigma == 0:
        post = np.zeros_like(sq)
        post[np.arange(len(x)), np.argmin(sq, axis=1)] = 1.0
        return post
    return softmax(-sq / (2.0 * sigma**2), axis=1)


def draw_points(spec: SynthSpec, n_per_class: int, rng) -> tuple[np.ndarray, np.ndarray]:
    centers = class_centers(spec.num_classes, spec.embedding_dim, spec.class_center_separation)
    labels = np.repeat(np.arange(spec.num_classes), n_per_class)
    noise = rng.standard_normal((len(labels), spec.embedding_dim)) * spec.cluster_spread
    return centers[labels] + noise, labels


def generate(spec: SynthSpec) -> list[Sample]:
    """Samples with embeddings and true distributions; label counts are all zero."""
    state = generate_state(spec)
    return state.samples


def generate_state(spec: SynthSpec) -> DatasetState:
    rng = np.random.default_rng(spec.seed)
    x, _ = draw_points(spec, spec.samples_per_class, rng)
    # shuffle so sample ids carry no class information
    x = x[rng.permutation(len(x))]
    centers = class_centers(spec.num_classes, spec.embedding_dim, spec.class_center_separation)
    true = mixture_posterior(x, centers, spec.cluster_spread)
    n = len(x)
    return DatasetState(ids=np.arange(n), embeddings=x, true_dists=true,
                        counts=np.zeros((n, spec.num_classes), dtype=np.int64))


#: Temperature used to draw initial labels on the default benchmark (realized noise near 30%).
DEFAULT_TAU = 3.5


def default_benchmark(seed: int = 0, tau: float = DEFAULT_TAU, cluster_spread: float = 1.0) -> DatasetState:
    """C=4, N=2000, L=16 mixture with temperature-sampled initial labels.

    Both the geometry and the initial labels are fixed by ``seed``.
    """
    base = generate_state(SynthSpec(cluster_spread=cluster_spread, seed=seed))
    state, _ = inject_noise(base, NoiseSpec(kind="temperature", tau=tau, seed=seed))
    return state
