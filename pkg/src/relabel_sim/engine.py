"""Sequential relabelling simulation.

Each round picks the top-ranked available sample and draws labels from its
true distribution until a strict majority forms. The budget is checked at
round start only, so the last round may overshoot it. Models are refreshed
whenever the running annotation count crosses a multiple of
``update_every``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DatasetState, has_majority
from .io import write_json
from .posterior.estimators import make_posterior
from .selector import make_selector

#: Hard cap on draws within one round.
MAX_DRAWS = 100

_TAG_ACQUIRE = 31
_TAG_BUDGET = 32

TRACE_COLUMNS = ("annotation_index", "sample_id", "drawn_class", "majority_formed",
                 "num_correct_after", "model_updated")


@dataclass
class SimulationConfig:
    budget: int
    update_every: float = math.inf
    selector: dict = field(default_factory=lambda: {"kind": "random"})
    posterior: Optional[dict] = None
    seed: int = 0
    max_rounds: Optional[int] = None

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if self.update_every is None:
            self.update_every = math.inf
        if not self.update_every >= 1:
            raise ValueError("update_every must be a positive integer or infinity")
        if isinstance(self.selector, str):
            self.selector = {"kind": self.selector}
        if isinstance(self.posterior, str):
            self.posterior = {"kind": self.posterior}


@dataclass(frozen=True)
class AnnotationEvent:
    annotation_index: int
    sample_id: int
    drawn_class: int
    counts_after: tuple
    majority_formed: bool
    num_correct_after: int
    model_updated: bool


@dataclass
class SimulationTrace:
    events: list
    final_state: DatasetState
    budget: int
    initial_correct: int
    num_samples: int
    capped: list = field(default_factory=list)
    exhausted: bool = False
    num_model_fits: int = 1
    cleaned_order: list = field(default_factory=list)

    @property
    def total_annotations(self) -> int:
        return len(self.events)

    @property
    def overshoot(self) -> int:
        return max(0, self.total_annotations - self.budget)

    @property
    def final_correct(self) -> int:
        return self.events[-1].num_correct_after if self.events else self.initial_correct

    def summary(self) -> dict:
        return {
            "total_annotations": self.total_annotations,
            "overshoot": self.overshoot,
            "budget": self.budget,
            "initial_correctness": self.initial_correct / self.num_samples,
            "final_correctness": self.final_correct / self.num_samples,
            "samples_cleaned": len(self.cleaned_order),
            "capped_rounds": len(self.capped),
            "exhausted": self.exhausted,
            "model_fits": self.num_model_fits,
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for e in self.events:
                w.writerow([e.annotation_index, e.sample_id, e.drawn_class, int(e.majority_formed),
                            e.num_correct_after, int(e.model_updated)])


def acquisition_rng(seed: int, sample_id: int):
    """Annotator stream for one sample; shared by every selector for a seed."""
    return np.random.default_rng([_TAG_ACQUIRE, seed, int(sample_id)])


def acquire_until_majority(counts, true_dist, rng, cap: int = MAX_DRAWS) -> tuple[list, np.ndarray, bool]:
    """Draw labels from ``true_dist`` until ``counts`` has a strict majority.

    At least one label is always drawn. Returns ``(draws, final_counts,
    capped)``; ``capped`` is True when the cap stopped the round first.
    """
    counts = np.array(counts, dtype=np.int64)
    p = np.asarray(true_dist, dtype=float)
    cdf = np.cumsum(p)
    draws = []
    while True:
        u = rng.random()
        c = min(int(np.searchsorted(cdf, u, side="right")), len(p) - 1)
        while p[c] <= 0:
            c -= 1
        counts[c] += 1
        draws.append(c)
        if has_majority(counts):
            return draws, counts, False
        if len(draws) >= cap:
            return draws, counts, True


def simulate_rounds(true_dist, counts, runs: int, rng, cap: int = MAX_DRAWS) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``acquire_until_majority`` over ``runs`` independent rounds.

    Returns the number of draws per run and the final majority class per run.
    """
    p = np.asarray(true_dist, dtype=float)
    C = len(p)
    state = np.tile(np.asarray(counts, dtype=np.int64), (runs, 1))
    n_draws = np.zeros(runs, dtype=np.int64)
    active = np.ones(runs, dtype=bool)
    for _ in range(cap):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        drawn = rng.choice(C, size=len(idx), p=p)
        state[idx, drawn] += 1
        n_draws[idx] += 1
        active[idx] = ~has_majority(state[idx])
    return n_draws, np.argmax(state, axis=1)


def _crossed(before: int, after: int, every: float) -> bool:
    if math.isinf(every):
        return False
    every = int(every)
    return after // every > before // every


def run_simulation(state: DatasetState, cfg: SimulationConfig) -> SimulationTrace:
    """Run one relabelling simulation on a private copy of ``state``."""
    state = state.copy()
    state.require_labelled()
    selector = make_selector(cfg.selector, seed=cfg.seed)
    estimator = None
    posterior = None
    if selector.needs_posterior:
        if cfg.posterior is None:
            raise ValueError(f"selector {selector.kind!r} needs a posterior spec")
        estimator = make_posterior(cfg.posterior, seed=cfg.seed)
        estimator.fit(state)
        posterior = estimator.predict(state)

    true = state.true_labels()
    majority = state.majority_labels()
    correct = majority == true
    num_correct = int(correct.sum())
    trace = SimulationTrace(events=[], final_state=state, budget=cfg.budget,
                            initial_correct=num_correct, num_samples=state.num_samples)
    count = 0
    rounds = 0
    while count < cfg.budget:
        if cfg.max_rounds is not None and rounds >= cfg.max_rounds:
            break
        avail = ~state.cleaned
        if not avail.any():
            trace.exhausted = True
            break
        scores = np.asarray(selector.scores(state, estimator, posterior), dtype=float)
        masked = np.where(avail, scores, -np.inf)
        if not np.all(np.isfinite(scores[avail])):
            bad = np.flatnonzero(avail & ~np.isfinite(scores))[0]
            raise ValueError(f"non-finite score for sample {int(state.ids[bad])}")
        j = int(np.argmax(masked))
        sid = int(state.ids[j])
        draws, final_counts, capped = acquire_until_majority(state.counts[j], state.true_dists[j],
                                                             acquisition_rng(cfg.seed, sid))
        before = count
        running = state.counts[j].copy()
        new_events = []
        for k, c in enumerate(draws):
            running[c] += 1
            count += 1
            maj = int(np.argmax(running))
            now_correct = maj == true[j]
            num_correct += int(now_correct) - int(correct[j])
            correct[j] = now_correct
            new_events.append([count, sid, c, tuple(int(v) for v in running),
                               bool(has_majority(running)), num_correct, False])
        state.counts[j] = final_counts
        state.cleaned[j] = True
        trace.cleaned_order.append(sid)
        if capped:
            trace.capped.append(sid)
        rounds += 1
        if estimator is not None and _crossed(before, count, cfg.update_every):
            estimator.update(state)
            posterior = estimator.predict(state)
            trace.num_model_fits += 1
            new_events[-1][-1] = True
        trace.events.extend(AnnotationEvent(*e) for e in new_events)
    return trace


def oracle_expected_budget(state: DatasetState, runs: int = 100, seed: int = 0) -> float:
    """Mean number of annotations the oracle spends visiting every mislabelled sample.

    The oracle's visiting order does not depend on the drawn labels, so the
    total is a sum of independent per-sample round lengths; each sample's
    ``runs`` rounds are simulated together.
    """
    if runs < 1:
        raise ValueError("runs must be positive")
    state.require_labelled()
    wrong = np.flatnonzero(state.mislabelled())
    total = np.zeros(runs)
    for j in wrong:
        rng = np.random.default_rng([_TAG_BUDGET, seed, int(state.ids[j])])
        total += simulate_rounds(state.true_dists[j], state.counts[j], runs, rng)[0]
    return float(total.mean())


def default_budget(state: DatasetState, runs: int = 100, seed: int = 0) -> int:
    return max(1, int(round(oracle_expected_budget(state, runs, seed))))


def write_summary(trace: SimulationTrace, path, extra: Optional[dict] = None):
    data = trace.summary()
    if extra:
        data.update(extra)
    write_json(data, path)
