"""Compare relabelling selectors on the default synthetic benchmark.

Prints the cleaning-curve AUC and the fraction of correct labels at a few
budget checkpoints for each selector, averaged over three seeds.

    python3 demos/cleaning_curves.py
"""
import numpy as np

from relabel_sim.engine import SimulationConfig, default_budget, run_simulation
from relabel_sim.metrics import cleaning_curve, curve_auc
from relabel_sim.synth import default_benchmark

SELECTORS = {
    "oracle": dict(selector="oracle"),
    "random": dict(selector="random"),
    "phi / graph": dict(selector="phi", posterior="graph", update_every=50),
    "phi / softmax": dict(selector="phi", posterior="softmax", update_every=100),
    "phi / ensemble": dict(selector="phi", posterior="ensemble", update_every=100),
    "bald / ensemble": dict(selector="bald", posterior="ensemble", update_every=100),
}
CHECKPOINTS = (0.25, 0.5, 1.0)

results = {name: [] for name in SELECTORS}
for seed in range(3):
    state = default_benchmark(seed)
    budget = default_budget(state, seed=seed)
    for name, kw in SELECTORS.items():
        curve = cleaning_curve(run_simulation(state, SimulationConfig(budget=budget, seed=seed, **kw)))
        at = curve.value_at([int(f * budget) for f in CHECKPOINTS])
        results[name].append([curve_auc(curve, budget), *at])

print(f"{'selector':<16} {'AUC':>6}" + "".join(f" {f'@{int(f * 100)}%':>6}" for f in CHECKPOINTS))
for name, rows in results.items():
    print(f"{name:<16}" + "".join(f" {v:6.3f}" for v in np.mean(rows, axis=0)))
