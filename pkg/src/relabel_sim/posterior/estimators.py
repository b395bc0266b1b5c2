"""Posterior estimators as the simulation consumes them.

An estimator is built from a plain dict spec (as found in config files),
fitted once on the initial noisy dataset and then refreshed with
``update`` as labels are acquired. ``predict`` returns an ``(N, C)``
posterior matrix aligned with the dataset's positions.
"""
from __future__ import annotations

from dataclasses import fields, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..core import DatasetState, normalize_counts
from .coteaching import CoTeachingConfig, HeadEnsemble, fit_co_teaching, fit_ensemble
from .graph import GraphConfig, build_knn_graph, normalized_adjacency, spread_raw
from .softmax import SoftmaxHead, SoftmaxHeadConfig, fit_softmax_head

POSTERIOR_KINDS = ("empirical", "uniform", "softmax", "coteaching", "ensemble", "graph")


def empirical_posteriors(state: DatasetState) -> np.ndarray:
    """Normalised label counts of every sample."""
    return normalize_counts(state.counts)


def _head_config(spec: dict, seed: int) -> SoftmaxHeadConfig:
    names = {f.name for f in fields(SoftmaxHeadConfig)} - {"seed"}
    return SoftmaxHeadConfig(seed=seed, **{k: v for k, v in spec.items() if k in names})


def _member_seeds(seed: int, count: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence([seed, 7]).spawn(count)]


class PosteriorEstimator:
    kind = "base"
    refits = False

    def fit(self, state: DatasetState):
        pass

    def update(self, state: DatasetState):
        self.fit(state)

    def predict(self, state: DatasetState) -> np.ndarray:
        raise NotImplementedError


class EmpiricalPosterior(PosteriorEstimator):
    kind = "empirical"

    def predict(self, state):
        return empirical_posteriors(state)


class UniformPosterior(PosteriorEstimator):
    kind = "uniform"

    def predict(self, state):
        return np.full(state.counts.shape, 1.0 / state.num_classes)


class SoftmaxPosterior(PosteriorEstimator):
    """Linear head on the embeddings; updates warm-start from current weights."""

    kind = "softmax"
    refits = True

    def __init__(self, cfg: SoftmaxHeadConfig, refresh_epochs: int = 10):
        self.cfg = cfg
        self.refresh_epochs = refresh_epochs
        self.head: Optional[SoftmaxHead] = None
        self.rng = np.random.default_rng(cfg.seed)

    def fit(self, state):
        self.head = fit_softmax_head(state.embeddings, state.majority_labels(), self.cfg,
                                     num_classes=state.num_classes, rng=self.rng)

    def update(self, state):
        self.head = fit_softmax_head(state.embeddings, state.majority_labels(), self.cfg,
                                     num_classes=state.num_classes, init=self.head,
                                     epochs=self.refresh_epochs, rng=self.rng)

    def predict(self, state):
        return self.head.predict_proba(state.embeddings)


class CoTeachingPosterior(PosteriorEstimator):
    """Two co-taught heads; ``drop_rate='auto'`` uses the current mislabelled fraction."""

    kind = "coteaching"
    refits = True

    def __init__(self, cfg: CoTeachingConfig, refresh_epochs: int = 10, auto_drop: bool = False):
        self.cfg = cfg
        self.refresh_epochs = refresh_epochs
        self.auto_drop = auto_drop
        self.model: Optional[HeadEnsemble] = None
        self.rngs = [np.random.default_rng(s) for s in cfg.seeds]

    def fit(self, state):
        if self.auto_drop:
            self.cfg = replace(self.cfg, drop_rate=min(float(state.mislabelled().mean()), 0.95))
        self.model = fit_co_teaching(state.embeddings, state.majority_labels(), self.cfg,
                                     num_classes=state.num_classes, rngs=self.rngs)

    def update(self, state):
        # refreshes run past warm-up: the exchange is active from the first step
        self.model = fit_co_teaching(state.embeddings, state.majority_labels(), self.cfg,
                                     num_classes=state.num_classes, init=self.model,
                                     epochs=self.refresh_epochs, rngs=self.rngs, warmup=0)

    def predict(self, state):
        return self.model.predict_proba(state.embeddings)


class EnsemblePosterior(PosteriorEstimator):
    """Bootstrap ensemble of heads; exposes member posteriors for BALD."""

    kind = "ensemble"
    refits = True

    def __init__(self, cfg: SoftmaxHeadConfig, members: int = 5, bootstrap: bool = True,
                 refresh_epochs: int = 10):
        self.cfg = cfg
        self.members = members
        self.bootstrap = bootstrap
        self.refresh_epochs = refresh_epochs
        self.model = None

    def fit(self, state):
        self.model = fit_ensemble(state.embeddings, state.majority_labels(), self.cfg,
                                  members=self.members, seed=self.cfg.seed,
                                  num_classes=state.num_classes, bootstrap=self.bootstrap)

    def update(self, state):
        y = state.majority_labels()
        x = state.embeddings
        heads = []
        for head, rows, rng in zip(self.model.members, self.model.rows, self.model.rngs):
            heads.append(fit_softmax_head(x[rows], y[rows], self.cfg, num_classes=state.num_classes,
                                          init=head, epochs=self.refresh_epochs, rng=rng))
        self.model.members = heads

    def predict_members(self, state) -> np.ndarray:
        return self.model.predict_members(state.embeddings)

    def predict(self, state):
        return self.model.predict_proba(state.embeddings)


class GraphPosterior(PosteriorEstimator):
    """Label spreading over a kNN graph of the embeddings.

    The graph and the factorised linear system are built once; an update
    only rebuilds the one-hot label matrix and re-solves.
    """

    kind = "graph"

    def __init__(self, cfg: GraphConfig = GraphConfig()):
        self.cfg = cfg
        self.W = None
        self._lu = None
        self._isolated = None

    def fit(self, state):
        self.W = build_knn_graph(state.embeddings, self.cfg, ids=state.ids)
        S, self._isolated = normalized_adjacency(self.W)
        if self.cfg.solver == "closed_form":
            A = sp.identity(S.shape[0], format="csc") - (1.0 / (1.0 + self.cfg.mu)) * S
            self._lu = spla.splu(A.tocsc())

    def update(self, state):
        if self.W is None:
            self.fit(state)

    def predict(self, state):
        C = state.num_classes
        Y = np.zeros((state.num_samples, C))
        Y[np.arange(state.num_samples), state.majority_labels()] = 1.0
        if self._lu is not None:
            F = (self.cfg.mu / (1.0 + self.cfg.mu)) * self._lu.solve(Y)
        else:
            F = spread_raw(self.W, Y, self.cfg)
        F[self._isolated] = empirical_posteriors(state)[self._isolated]
        return F / F.sum(axis=1, keepdims=True)


def make_posterior(spec, seed: int = 0) -> PosteriorEstimator:
    """Build an estimator from a dict spec such as ``{"kind": "graph", "k_neighbors": 10}``."""
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind", None)
    spec.pop("name", None)
    if kind not in POSTERIOR_KINDS:
        raise ValueError(f"unknown posterior kind {kind!r}; expected one of {POSTERIOR_KINDS}")
    if kind == "empirical":
        return EmpiricalPosterior()
    if kind == "uniform":
        return UniformPosterior()
    if kind == "graph":
        names = {f.name for f in fields(GraphConfig)}
        return GraphPosterior(GraphConfig(**{k: v for k, v in spec.items() if k in names}))
    refresh = int(spec.get("refresh_epochs", 10))
    head = _head_config(spec, seed)
    if kind == "softmax":
        return SoftmaxPosterior(head, refresh_epochs=refresh)
    if kind == "ensemble":
        return EnsemblePosterior(head, members=int(spec.get("members", 5)),
                                 bootstrap=bool(spec.get("bootstrap", True)), refresh_epochs=refresh)
    drop = spec.get("drop_rate", "auto")
    auto = drop == "auto"
    cfg = CoTeachingConfig(head_config=head, drop_rate=0.0 if auto else float(drop),
                           warmup_epochs=int(spec.get("warmup_epochs", 10)),
                           seeds=tuple(_member_seeds(seed, 2)))
    return CoTeachingPosterior(cfg, refresh_epochs=refresh, auto_drop=auto)
