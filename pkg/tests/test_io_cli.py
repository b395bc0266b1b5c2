import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from relabel_sim.cli import main
from relabel_sim.experiment import ConfigError, ExperimentConfig, comparison_rows, worker_count
from relabel_sim.io import fmt, read_dataset, round_floats, write_dataset
from relabel_sim.synth import SynthSpec, generate_state

from conftest import make_state


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / "d.jsonl"
    assert main(["synth", "--classes", "3", "--per-class", "20", "--dim", "5", "--seed", "2",
                 "--out", str(path)]) == 0
    return path


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# -- file formats --------------------------------------------------------------------

def test_dataset_round_trip_exact(tmp_path, rng):
    state = generate_state(SynthSpec(samples_per_class=15, seed=4))
    state = state.with_labels(rng.integers(0, 4, state.num_samples))
    write_dataset(state, tmp_path / "x.jsonl")
    back = read_dataset(tmp_path / "x.jsonl")
    for name in ("ids", "embeddings", "true_dists", "counts"):
        assert getattr(back, name).tobytes() == getattr(state, name).tobytes()


def test_dataset_header_checked(tmp_path):
    state = make_state([[1.0, 0.0]], labels=[0])
    write_dataset(state, tmp_path / "x.jsonl")
    lines = (tmp_path / "x.jsonl").read_text().splitlines()
    header = json.loads(lines[0])
    assert header == {"num_classes": 2, "embedding_dim": 3, "num_samples": 1}
    header["num_samples"] = 2
    (tmp_path / "y.jsonl").write_text(json.dumps(header) + "\n" + lines[1] + "\n")
    with pytest.raises(ValueError):
        read_dataset(tmp_path / "y.jsonl")


def test_float_formatting():
    assert fmt(1 / 3) == "0.333333333"
    assert round_floats({"a": [np.float64(2 / 3)], "b": np.int64(4)}) == {"a": [0.666666667], "b": 4}


# -- synth ----------------------------------------------------------------------------

def test_synth_row_count_and_determinism(tmp_path):
    args = ["synth", "--classes", "4", "--per-class", "500", "--dim", "16", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a.jsonl")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.jsonl")]) == 0
    a = (tmp_path / "a.jsonl").read_bytes()
    assert a == (tmp_path / "b.jsonl").read_bytes()
    assert len(a.decode().splitlines()) == 1 + 2000


def test_synth_usage_errors(tmp_path, capsys):
    assert main(["synth", "--classes", "1", "--out", str(tmp_path / "a.jsonl")]) == 2
    assert main(["synth"]) == 2
    with pytest.raises(SystemExit) as err:
        main(["synth", "--classes", "two"])
    assert err.value.code == 2


def test_synth_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["synth", "--per-class", "2", "--out", str(blocker / "sub" / "d.jsonl")]) == 3


def test_synth_config_file_and_override(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"classes": 3, "per_class": 4, "out": str(tmp_path / "c.jsonl")}))
    assert main(["synth", "--config", str(cfg), "--per-class", "5"]) == 0
    assert read_dataset(tmp_path / "c.jsonl").num_samples == 15
    cfg.write_text(json.dumps({"classez": 3}))
    assert main(["synth", "--config", str(cfg)]) == 2


# -- noise ------------------------------------------------------------------------------

def test_noise_temperature_onehot_truth(tmp_path):
    assert main(["synth", "--spread", "0", "--per-class", "30", "--out", str(tmp_path / "d.jsonl")]) == 0
    assert main(["noise", str(tmp_path / "d.jsonl"), "--model", "temperature", "--tau", "1",
                 "--out", str(tmp_path / "n.jsonl")]) == 0
    report = json.loads((tmp_path / "n.report.json").read_text())
    assert report["realized_rate"] == 0.0


def test_noise_symmetric_binomial_band(tmp_path):
    assert main(["synth", "--per-class", "2500", "--separation", "30", "--out", str(tmp_path / "d.jsonl")]) == 0
    assert main(["noise", str(tmp_path / "d.jsonl"), "--model", "symmetric", "--rate", "0.15", "--seed", "3",
                 "--out", str(tmp_path / "n.jsonl")]) == 0
    report = json.loads((tmp_path / "n.report.json").read_text())
    n = 10_000
    assert abs(report["realized_rate"] - 0.15) <= 3 * math.sqrt(0.15 * 0.85 / n)
    conf = read_csv(tmp_path / "n.confusion.csv")
    assert sum(int(v) for row in conf for k, v in row.items() if k != "clean_class") == n


def test_noise_idn_audit_rows(tmp_path, dataset):
    assert main(["noise", str(dataset), "--model", "idn", "--rate", "0.4", "--out", str(tmp_path / "i.jsonl")]) == 0
    rows = read_csv(tmp_path / "i.transitions.csv")
    assert len(rows) == 60
    for row in rows:
        assert sum(float(v) for k, v in row.items() if k != "sample_id") == pytest.approx(1.0, abs=1e-8)


def test_noise_class_dependent_bias(tmp_path, dataset):
    bias = json.dumps([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    assert main(["noise", str(dataset), "--model", "class_dependent", "--rate", "0.2", "--bias", bias,
                 "--out", str(tmp_path / "c.jsonl")]) == 0
    T = np.loadtxt(tmp_path / "c.transitions.csv", delimiter=",", skiprows=1)[:, 1:]
    np.testing.assert_allclose(T, 0.8 * np.eye(3) + 0.2 * np.roll(np.eye(3), 1, axis=1), atol=1e-9)


def test_noise_errors(tmp_path, dataset):
    out = str(tmp_path / "n.jsonl")
    assert main(["noise", str(dataset), "--model", "gaussian", "--out", out]) == 2
    assert main(["noise", str(dataset), "--model", "symmetric", "--rate", "1.5", "--out", out]) == 2
    assert main(["noise", str(tmp_path / "missing.jsonl"), "--out", out]) == 2


# -- rank -------------------------------------------------------------------------------

def test_rank_uniform_posterior(tmp_path, dataset):
    noisy = tmp_path / "n.jsonl"
    assert main(["noise", str(dataset), "--model", "temperature", "--tau", "2", "--out", str(noisy)]) == 0
    assert main(["rank", str(noisy), "--posterior", "uniform", "--out", str(tmp_path / "r.csv")]) == 0
    rows = read_csv(tmp_path / "r.csv")
    np.testing.assert_allclose([float(r["score"]) for r in rows], 0.0, atol=1e-12)
    assert [int(r["sample_id"]) for r in rows] == list(range(60))


def test_rank_empirical_on_clean_onehot(tmp_path):
    assert main(["synth", "--spread", "0", "--per-class", "10", "--out", str(tmp_path / "d.jsonl")]) == 0
    assert main(["noise", str(tmp_path / "d.jsonl"), "--out", str(tmp_path / "n.jsonl")]) == 0
    assert main(["rank", str(tmp_path / "n.jsonl"), "--posterior", "empirical",
                 "--out", str(tmp_path / "r.csv")]) == 0
    assert all(float(r["score"]) == 0.0 for r in read_csv(tmp_path / "r.csv"))


def test_rank_score_identity_and_config(tmp_path, dataset):
    noisy = tmp_path / "n.jsonl"
    assert main(["noise", str(dataset), "--tau", "3", "--out", str(noisy)]) == 0
    cfg = tmp_path / "r.json"
    cfg.write_text(json.dumps({"dataset": str(noisy), "posterior": {"kind": "graph", "k_neighbors": 5},
                               "out": str(tmp_path / "r.csv")}))
    assert main(["rank", "--config", str(cfg)]) == 0
    rows = read_csv(tmp_path / "r.csv")
    for r in rows:
        assert float(r["score"]) == pytest.approx(float(r["ce_term"]) - float(r["ambiguity_term"]), abs=2e-8)
    assert main(["rank", str(noisy), "--selector", "bald", "--posterior", "graph", "--out",
                 str(tmp_path / "b.csv")]) == 2


def test_rank_unlabelled_dataset_is_config_error(tmp_path, dataset):
    assert main(["rank", str(dataset), "--out", str(tmp_path / "r.csv")]) == 2


# -- simulate -----------------------------------------------------------------------------

def write_config(tmp_path, dataset, **extra):
    cfg = {"dataset": str(dataset), "noise": {"kind": "temperature", "tau": 3.0},
           "selectors": ["oracle", "random"], "seeds": [0, 1, 2, 3, 4],
           "simulation": {"budget_runs": 20}, "output_dir": str(tmp_path / "out")}
    cfg.update(extra)
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(cfg))
    return path


def test_simulate_outputs(tmp_path, dataset):
    path = write_config(tmp_path, dataset)
    assert main(["simulate", "--config", str(path)]) == 0
    out = tmp_path / "out"
    assert len(list((out / "runs").glob("*.trace.csv"))) == 10
    assert len(list(out.glob("*.csv"))) == 1
    trace = read_csv(next((out / "runs").glob("oracle__seed0.trace.csv")))
    assert list(trace[0]) == ["annotation_index", "sample_id", "drawn_class", "majority_formed",
                              "num_correct_after", "model_updated"]
    summary = json.loads((out / "runs" / "oracle__seed0.summary.json").read_text())
    for key in ("auc", "final_fraction", "clear_noisy", "difficult_noisy", "total_annotations", "overshoot"):
        assert key in summary
    first = {p.name: p.read_bytes() for p in (out / "runs").glob("*.json")}
    assert main(["simulate", "--config", str(path)]) == 0
    assert first == {p.name: p.read_bytes() for p in (out / "runs").glob("*.json")}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["complete"] and len(manifest["runs"]) == 10


def test_simulate_oracle_beats_random(tmp_path, dataset):
    assert main(["simulate", "--config", str(write_config(tmp_path, dataset))]) == 0
    means = {r["selector"]: float(r["auc"]) for r in read_csv(tmp_path / "out" / "comparison.csv")
             if r["seed"] == "mean"}
    assert means["oracle"] >= means["random"]


def test_simulate_config_errors(tmp_path, dataset):
    assert main(["simulate"]) == 2
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2
    assert main(["simulate", "--config", str(write_config(tmp_path, dataset, selectors=[]))]) == 2
    assert main(["simulate", "--config", str(write_config(tmp_path, dataset, seeds=[]))]) == 2
    assert main(["simulate", "--config", str(write_config(tmp_path, tmp_path / "gone.jsonl"))]) == 2
    assert main(["simulate", "--config", str(write_config(tmp_path, dataset, selectors=["phi"]))]) == 2
    assert main(["simulate", "--config", str(write_config(tmp_path, dataset, extra_key=1))]) == 2
    assert main(["simulate", "--config", str(write_config(
        tmp_path, dataset, selectors=[{"kind": "bald", "posterior": "graph"}]))]) == 2
    assert main(["simulate", "--config", str(write_config(tmp_path, dataset)), "--seeds", "1,x"]) == 2


def test_simulate_runtime_failure_writes_partial_manifest(tmp_path, dataset):
    # K larger than the dataset makes the graph posterior fail at fit time
    path = write_config(tmp_path, dataset, seeds=[0],
                        selectors=["random", {"kind": "phi", "posterior": {"kind": "graph", "k_neighbors": 500}}])
    assert main(["simulate", "--config", str(path)]) == 3
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert not manifest["complete"]
    assert [r["selector"] for r in manifest["runs"]] == ["random"]
    assert manifest["failed"][0]["selector"] == "phi_graph"


def test_experiment_config_named_posteriors(tmp_path, dataset):
    cfg = ExperimentConfig.from_dict({
        "dataset": str(dataset), "posteriors": {"g5": {"kind": "graph", "k_neighbors": 5}},
        "selectors": [{"kind": "phi", "posterior": "g5", "update_every": 10},
                      {"name": "bald5", "kind": "bald", "posterior": {"kind": "ensemble"}}]})
    a, b = cfg.entries
    assert a.name == "phi_g5" and a.posterior["k_neighbors"] == 5 and a.update_every == 10
    assert b.name == "bald5" and b.posterior == {"kind": "ensemble"}
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"dataset": str(dataset), "selectors": ["oracle", "oracle"]})


def test_worker_count_respects_env(monkeypatch):
    monkeypatch.delenv("RELABEL_SIM_THREADS", raising=False)
    assert worker_count() == 1 and worker_count(4) == 4
    monkeypatch.setenv("RELABEL_SIM_THREADS", "2")
    assert worker_count() == 2 and worker_count(8) == 2


def test_comparison_rows_means():
    rows = [{"selector": "a", "seed": s, "budget": 10, "total_annotations": 10 + s, "overshoot": s,
             "initial_fraction": 0.5, "final_fraction": 0.7, "auc": 0.6 + s / 10, "clear_noisy": 3,
             "difficult_noisy": 1} for s in (0, 1)]
    out = comparison_rows(rows)
    assert out[-1]["seed"] == "mean" and out[-1]["auc"] == pytest.approx(0.65)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "relabel_sim", "synth", "--per-class", "3",
                          "--out", str(tmp_path / "m.jsonl")], capture_output=True)
    assert res.returncode == 0
    res = subprocess.run([sys.executable, "-m", "relabel_sim", "bogus"], capture_output=True)
    assert res.returncode == 2
