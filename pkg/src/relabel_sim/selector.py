"""Sample ranking: noisiness-minus-ambiguity score, BALD, oracle and random.

Selectors return one priority value per dataset position (higher first);
the engine picks the best available position and ties go to the lowest
sample id, which is also the lowest position.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DatasetState, LOG_FLOOR, cross_entropy, entropy, normalized_entropy
from .noise import per_id_uniforms

SELECTOR_KINDS = ("phi", "bald", "oracle", "random")

_TAG_RANDOM = 21
_TAG_DRAWS = 22


def phi_terms(counts, posterior) -> tuple[np.ndarray, np.ndarray]:
    """``(cross-entropy of given labels, posterior entropy)``."""
    return np.asarray(cross_entropy(counts, posterior)), np.asarray(entropy(posterior))


def phi_score(counts, posterior, no_ambiguity_term: bool = False):
    """Label noisiness minus sample ambiguity; larger means clean me first."""
    ce, amb = phi_terms(counts, posterior)
    score = ce if no_ambiguity_term else ce - amb
    return float(score) if score.ndim == 0 else score


def bald_score(member_posteriors):
    """Mutual information between label and ensemble member.

    ``member_posteriors`` has members on axis 0: ``(M, C)`` for one sample or
    ``(M, N, C)`` for many.
    """
    p = np.asarray(member_posteriors, dtype=float)
    if p.shape[0] < 2:
        raise ValueError("BALD needs at least two members")
    mi = np.asarray(entropy(p.mean(axis=0))) - np.asarray(entropy(p)).mean(axis=0)
    mi = np.maximum(mi, 0.0)
    return float(mi) if mi.ndim == 0 else mi


@dataclass
class Ranking:
    ids: np.ndarray
    scores: np.ndarray
    ce_terms: Optional[np.ndarray] = None
    ambiguity_terms: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.ids)

    def to_csv(self, path, fmt=None):
        fmt = fmt or (lambda v: f"{v:.9g}")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "sample_id", "score", "ce_term", "ambiguity_term"])
            for r, (i, s) in enumerate(zip(self.ids, self.scores)):
                ce = "" if self.ce_terms is None else fmt(self.ce_terms[r])
                amb = "" if self.ambiguity_terms is None else fmt(self.ambiguity_terms[r])
                w.writerow([r + 1, int(i), fmt(s), ce, amb])


def _order(state: DatasetState, scores, extra_keys=()) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (state.num_samples,):
        raise ValueError("need one score per sample")
    avail = np.flatnonzero(~state.cleaned)
    bad = avail[~np.isfinite(scores[avail])]
    if len(bad):
        raise ValueError(f"non-finite score for sample {int(state.ids[bad[0]])}")
    keys = [state.ids[avail]] + [k[avail] for k in extra_keys] + [-scores[avail]]
    return avail[np.lexsort(keys)]


def rank_candidates(state: DatasetState, scores, ce_terms=None, ambiguity_terms=None) -> Ranking:
    """Available samples by descending score, ties by ascending id."""
    pos = _order(state, scores)
    pick = (lambda a: None if a is None else np.asarray(a)[pos])
    return Ranking(state.ids[pos], np.asarray(scores, dtype=float)[pos], pick(ce_terms), pick(ambiguity_terms))


def expected_draws_to_majority(true_dists, counts, runs: int = 2000, seed: int = 0,
                               cap: int = 100) -> np.ndarray:
    """Monte Carlo mean number of draws until a strict majority forms, per sample."""
    from .engine import simulate_rounds  # local import: engine depends on this module
    out = np.empty(len(true_dists))
    for i, (p, c) in enumerate(zip(true_dists, counts)):
        rng = np.random.default_rng([_TAG_DRAWS, seed, i])
        out[i] = simulate_rounds(p, c, runs, rng, cap=cap)[0].mean()
    return out


def oracle_keys(state: DatasetState, difficulty: str = "entropy") -> tuple[np.ndarray, np.ndarray]:
    """``(mislabelled flag, difficulty)`` per position for the oracle ordering."""
    wrong = state.mislabelled()
    if difficulty == "entropy":
        diff = np.asarray(normalized_entropy(state.true_dists), dtype=float)
    elif difficulty == "expected_draws":
        diff = expected_draws_to_majority(state.true_dists, state.counts)
    else:
        raise ValueError("oracle difficulty must be 'entropy' or 'expected_draws'")
    return wrong, diff


def oracle_priority(state: DatasetState, difficulty: str = "entropy") -> Ranking:
    """Mislabelled samples first, least difficult first within each group."""
    wrong, diff = oracle_keys(state, difficulty)
    avail = np.flatnonzero(~state.cleaned)
    pos = avail[np.lexsort([state.ids[avail], diff[avail], ~wrong[avail]])]
    n = len(pos)
    return Ranking(state.ids[pos], np.arange(n, 0, -1, dtype=float))


def random_keys(state: DatasetState, seed: int) -> np.ndarray:
    return per_id_uniforms(state.ids, seed, tag=_TAG_RANDOM)


def random_priority(state: DatasetState, seed: int) -> Ranking:
    """Uniform random order of the available samples, fixed by ``seed``.

    Each id gets its own key, so removing samples never reorders the rest.
    """
    keys = random_keys(state, seed)
    avail = np.flatnonzero(~state.cleaned)
    pos = avail[np.lexsort([state.ids[avail], keys[avail]])]
    return Ranking(state.ids[pos], np.arange(len(pos), 0, -1, dtype=float))


class Selector:
    kind = "base"
    needs_posterior = False

    def scores(self, state: DatasetState, estimator=None, posterior=None) -> np.ndarray:
        raise NotImplementedError

    def terms(self, state, estimator=None, posterior=None):
        return None, None


class PhiSelector(Selector):
    kind = "phi"
    needs_posterior = True

    def __init__(self, no_ambiguity_term: bool = False):
        self.no_ambiguity_term = no_ambiguity_term

    def scores(self, state, estimator=None, posterior=None):
        return phi_score(state.counts, posterior, self.no_ambiguity_term)

    def terms(self, state, estimator=None, posterior=None):
        ce, amb = phi_terms(state.counts, posterior)
        return ce, (np.zeros_like(amb) if self.no_ambiguity_term else amb)


class BaldSelector(Selector):
    """Reported terms are H(mean member posterior) and the mean member entropy."""

    kind = "bald"
    needs_posterior = True

    def _members(self, state, estimator):
        if not hasattr(estimator, "predict_members"):
            raise ValueError("the BALD selector needs an ensemble posterior")
        return estimator.predict_members(state)

    def scores(self, state, estimator=None, posterior=None):
        return bald_score(self._members(state, estimator))

    def terms(self, state, estimator=None, posterior=None):
        p = self._members(state, estimator)
        return np.asarray(entropy(p.mean(axis=0))), np.asarray(entropy(p)).mean(axis=0)


class OracleSelector(Selector):
    kind = "oracle"

    def __init__(self, difficulty: str = "entropy"):
        self.difficulty = difficulty
        self._diff = None

    def scores(self, state, estimator=None, posterior=None):
        if self._diff is None:
            # difficulty depends on true distributions and initial counts only
            self._diff = oracle_keys(state, self.difficulty)[1]
        wrong = state.mislabelled()
        # mislabelled in [1, 2], correct in [-1, 0]; less difficult ranks higher
        return np.where(wrong, 2.0, 0.0) - self._diff / max(float(self._diff.max(initial=0.0)), 1.0)


class RandomSelector(Selector):
    kind = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._keys = None

    def scores(self, state, estimator=None, posterior=None):
        if self._keys is None:
            self._keys = random_keys(state, self.seed)
        return -self._keys


def make_selector(spec, seed: int = 0) -> Selector:
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind")
    if kind in ("phi_ce", "ce"):
        return PhiSelector(no_ambiguity_term=True)
    if kind not in SELECTOR_KINDS:
        raise ValueError(f"unknown selector kind {kind!r}; expected one of {SELECTOR_KINDS}")
    if kind == "phi":
        return PhiSelector(no_ambiguity_term=bool(spec.get("no_ambiguity_term", False)))
    if kind == "bald":
        return BaldSelector()
    if kind == "oracle":
        return OracleSelector(difficulty=spec.get("difficulty", "entropy"))
    return RandomSelector(seed=seed)
