"""Multi-seed, multi-selector simulation sweeps driven by a JSON config.

Config layout (all keys except ``dataset`` optional)::

    {
      "dataset": "data.jsonl",
      "noise": {"kind": "temperature", "tau": 3.5},
      "posteriors": {"graph": {"kind": "graph", "k_neighbors": 10}},
      "selectors": ["oracle", "random",
                    {"name": "phi_graph", "kind": "phi", "posterior": "graph"}],
      "simulation": {"budget": null, "update_every": 50, "budget_runs": 100},
      "seeds": [0, 1, 2, 3, 4],
      "output_dir": "out"
    }

Without a ``budget`` each run uses the oracle's expected cost of cleaning
every mislabelled sample. Without a noise ``seed`` the run seed is used.
"""
from __future__ import annotations

import json
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .core import DatasetState
from .engine import SimulationConfig, default_budget, run_simulation, write_summary
from .io import read_dataset, write_json, write_rows_csv
from .metrics import cleaning_curve, curve_auc, noisy_breakdown
from .noise import NoiseSpec, inject_noise

log = logging.getLogger(__name__)

THREADS_ENV = "RELABEL_SIM_THREADS"

COMPARISON_COLUMNS = ("selector", "seed", "budget", "total_annotations", "overshoot",
                      "initial_fraction", "final_fraction", "auc", "clear_noisy", "difficult_noisy")


class ConfigError(ValueError):
    pass


@dataclass
class SelectorEntry:
    name: str
    spec: dict
    posterior: Optional[dict] = None
    update_every: Optional[float] = None


@dataclass
class ExperimentConfig:
    dataset: str
    selectors: list
    seeds: list = field(default_factory=lambda: [0])
    noise: Optional[dict] = None
    posteriors: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    output_dir: str = "out"

    def __post_init__(self):
        if not self.selectors:
            raise ConfigError("config needs at least one selector")
        if not self.seeds:
            raise ConfigError("config needs at least one seed")
        if not Path(self.dataset).exists():
            raise ConfigError(f"dataset file {self.dataset} does not exist")
        self.entries = [self._entry(s) for s in self.selectors]
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ConfigError(f"selector names must be unique: {names}")
        if self.noise is not None:
            try:
                NoiseSpec(**{k: v for k, v in self.noise.items() if k != "seed"}, seed=0)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad noise spec: {exc}") from exc

    def _entry(self, raw) -> SelectorEntry:
        spec = {"kind": raw} if isinstance(raw, str) else dict(raw)
        if "kind" not in spec:
            raise ConfigError(f"selector entry lacks 'kind': {raw}")
        post = spec.pop("posterior", None)
        if isinstance(post, str):
            if post in self.posteriors:
                post = dict(self.posteriors[post], name=post)
            else:
                post = {"kind": post}
        upd = spec.pop("update_every", None)
        default_name = spec["kind"] if post is None else f"{spec['kind']}_{post.get('name', post['kind'])}"
        name = spec.pop("name", default_name)
        if spec["kind"] in ("phi", "phi_ce", "bald") and post is None:
            raise ConfigError(f"selector {name!r} needs a posterior")
        if spec["kind"] == "bald" and post["kind"] != "ensemble":
            raise ConfigError(f"selector {name!r}: bald needs an ensemble posterior")
        return SelectorEntry(name=name, spec=spec, posterior=post, update_every=upd)

    @classmethod
    def from_dict(cls, data: dict, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        known = {"dataset", "selectors", "seeds", "noise", "posteriors", "simulation", "output_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" not in data:
            raise ConfigError("config needs a 'dataset'")
        data = dict(data)
        if base_dir is not None:
            for key in ("dataset", "output_dir"):
                if key in data and not Path(data[key]).is_absolute():
                    data[key] = str(base_dir / data[key])
        return cls(**data)

    @classmethod
    def load(cls, path, overrides: Optional[dict] = None) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(data, base_dir=Path(path).resolve().parent)


def worker_count(requested: Optional[int] = None) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = requested if requested is not None else (int(cap) if cap else 1)
    if cap:
        n = min(n, int(cap))
    return max(1, n)


def prepare_state(base: DatasetState, noise: Optional[dict], seed: int) -> DatasetState:
    if noise is None:
        return base
    spec = dict(noise)
    spec.setdefault("seed", seed)
    state, _ = inject_noise(base, NoiseSpec(**spec))
    return state


def run_one(base: DatasetState, cfg: ExperimentConfig, entry: SelectorEntry, seed: int) -> dict:
    """Run one (selector, seed) pair and write its trace, curve and summary files."""
    state = prepare_state(base, cfg.noise, seed)
    sim = cfg.simulation
    budget = sim.get("budget")
    if budget is None:
        budget = default_budget(state, runs=int(sim.get("budget_runs", 100)), seed=seed)
    update_every = entry.update_every if entry.update_every is not None else sim.get("update_every")
    update_every = math.inf if update_every in (None, "inf", "infinity") else update_every
    sc = SimulationConfig(budget=int(budget), update_every=update_every, selector=entry.spec,
                          posterior=entry.posterior, seed=seed)
    trace = run_simulation(state, sc)
    curve = cleaning_curve(trace)
    auc = curve_auc(curve, sc.budget)
    clear, hard = noisy_breakdown(trace.final_state)
    out = Path(cfg.output_dir) / "runs"
    stem = f"{entry.name}__seed{seed}"
    trace.to_csv(out / f"{stem}.trace.csv")
    curve.to_csv(out / f"{stem}.curve.csv")
    extra = {"selector": entry.name, "seed": seed, "auc": auc,
             "final_fraction": curve.correct_fraction[-1], "clear_noisy": clear, "difficult_noisy": hard}
    write_summary(trace, out / f"{stem}.summary.json", extra)
    return {"selector": entry.name, "seed": seed, "budget": sc.budget,
            "total_annotations": trace.total_annotations, "overshoot": trace.overshoot,
            "initial_fraction": float(curve.correct_fraction[0]),
            "final_fraction": float(curve.correct_fraction[-1]), "auc": auc,
            "clear_noisy": clear, "difficult_noisy": hard}


def _task(args):
    base, cfg, entry, seed = args
    try:
        return ("ok", run_one(base, cfg, entry, seed))
    except Exception:  # reported in the manifest; the sweep aborts afterwards
        return ("error", {"selector": entry.name, "seed": seed, "error": traceback.format_exc()})


def comparison_rows(rows: list[dict]) -> list[dict]:
    """Per-run rows followed by one mean row per selector (seed column ``mean``)."""
    rows = sorted(rows, key=lambda r: (r["selector"], r["seed"]))
    out = list(rows)
    for name in sorted({r["selector"] for r in rows}):
        group = [r for r in rows if r["selector"] == name]
        mean = {"selector": name, "seed": "mean"}
        for col in COMPARISON_COLUMNS[2:]:
            mean[col] = float(sum(r[col] for r in group) / len(group))
        out.append(mean)
    return out


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> dict:
    """Run every (selector, seed) pair; returns the manifest that is also written to disk.

    Raises ``RuntimeError`` after writing a partial manifest if any run failed.
    """
    base = read_dataset(cfg.dataset)
    out = Path(cfg.output_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    tasks = [(base, cfg, e, s) for e in cfg.entries for s in cfg.seeds]
    n = worker_count(workers)
    log.info("running %d simulations on %d worker(s)", len(tasks), n)
    if n == 1:
        results = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_task, tasks))
    done = [r for status, r in results if status == "ok"]
    failed = [r for status, r in results if status == "error"]
    manifest = {"complete": not failed,
                "runs": [{"selector": r["selector"], "seed": r["seed"],
                          "trace": f"runs/{r['selector']}__seed{r['seed']}.trace.csv"} for r in done],
                "failed": failed}
    if done:
        write_rows_csv(comparison_rows(done), COMPARISON_COLUMNS, out / "comparison.csv")
    write_json(manifest, out / "manifest.json")
    if failed:
        raise RuntimeError(f"{len(failed)} run(s) failed; see {out / 'manifest.json'}")
    return manifest
