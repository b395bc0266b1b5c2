"""Cleaning curves, their area, and label-quality summaries."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DatasetState, DifficultyConfig, is_difficult


@dataclass
class CleaningCurve:
    annotations: np.ndarray  # strictly increasing, starts at 0
    correct_fraction: np.ndarray

    def __post_init__(self):
        self.annotations = np.asarray(self.annotations, dtype=np.int64)
        self.correct_fraction = np.asarray(self.correct_fraction, dtype=float)
        if len(self.annotations) == 0 or self.annotations[0] != 0:
            raise ValueError("a cleaning curve starts at 0 annotations")
        if np.any(np.diff(self.annotations) <= 0):
            raise ValueError("annotation counts must be strictly increasing")

    @property
    def points(self) -> list[tuple[int, float]]:
        return list(zip(self.annotations.tolist(), self.correct_fraction.tolist()))

    def value_at(self, annotations) -> np.ndarray | float:
        """Correct fraction after the last event at or before ``annotations`` (step function)."""
        idx = np.searchsorted(self.annotations, annotations, side="right") - 1
        vals = self.correct_fraction[np.maximum(idx, 0)]
        return float(vals) if np.ndim(vals) == 0 else vals

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["annotations", "correct_fraction"])
            for a, f in zip(self.annotations, self.correct_fraction):
                w.writerow([int(a), f"{f:.9g}"])


def correctness_fraction(state: DatasetState) -> float:
    """Share of samples whose majority label equals their true class."""
    state.require_labelled()
    return float(np.mean(state.majority_labels() == state.true_labels()))


def cleaning_curve(trace) -> CleaningCurve:
    n = trace.num_samples
    xs = [0] + [e.annotation_index for e in trace.events]
    ys = [trace.initial_correct / n] + [e.num_correct_after / n for e in trace.events]
    return CleaningCurve(xs, ys)


def curve_auc(curve: CleaningCurve, budget: float) -> float:
    """Trapezoidal area under the curve over ``[0, budget]``, divided by ``budget``.

    The curve is extended flat with its last value when it stops before the
    budget and cut (by linear interpolation) when it runs past it.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    x = curve.annotations.astype(float)
    y = curve.correct_fraction
    keep = x < budget
    xs = np.concatenate([x[keep], [budget]])
    end = np.interp(budget, x, y) if x[-1] >= budget else y[-1]
    ys = np.concatenate([y[keep], [end]])
    return float(np.trapezoid(ys, xs) / budget)


def annotations_to_reach(curve: CleaningCurve, fraction: float) -> Optional[int]:
    """First annotation count at which the curve reaches ``fraction``; None if never."""
    hit = np.flatnonzero(curve.correct_fraction >= fraction)
    return int(curve.annotations[hit[0]]) if len(hit) else None


def noisy_breakdown(state: DatasetState, cfg: DifficultyConfig = DifficultyConfig()) -> tuple[int, int]:
    """``(clear_noisy, difficult_noisy)`` counts among currently mislabelled samples."""
    wrong = state.mislabelled()
    hard = np.asarray(is_difficult(state.true_dists, cfg), dtype=bool)
    return int(np.sum(wrong & ~hard)), int(np.sum(wrong & hard))


def breakdown_over_trace(initial: DatasetState, trace, checkpoints, cfg: DifficultyConfig = DifficultyConfig()):
    """Clear/difficult noisy counts after each checkpoint annotation count.

    Replays the trace's label counts onto ``initial``.
    """
    counts = initial.counts.copy()
    pos = {int(i): p for p, i in enumerate(initial.ids)}
    hard = np.asarray(is_difficult(initial.true_dists, cfg), dtype=bool)
    true = initial.true_labels()
    out = []
    events = trace.events
    k = 0
    for cp in checkpoints:
        while k < len(events) and events[k].annotation_index <= cp:
            e = events[k]
            counts[pos[e.sample_id]] = e.counts_after
            k += 1
        wrong = np.argmax(counts, axis=1) != true
        out.append((int(np.sum(wrong & ~hard)), int(np.sum(wrong & hard))))
    return out


def accuracy_on_labels(predictions, reference) -> float:
    p = np.asarray(predictions)
    r = np.asarray(reference)
    if p.shape != r.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {r.shape}")
    if p.size == 0:
        raise ValueError("no labels to compare")
    return float(np.mean(p == r))
