"""Command-line entry point: ``relabel-sim {synth,noise,simulate,rank}``.

Every command takes ``--config FILE`` (a JSON object whose keys are the
command's long option names with dashes replaced by underscores); flags
given on the command line override the file. Exit codes: 0 success,
2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import DatasetState
from .experiment import ConfigError, ExperimentConfig, run_experiment
from .io import read_dataset, write_dataset, write_json, write_matrix_csv
from .noise import NoiseSpec, inject_noise
from .posterior.estimators import make_posterior
from .selector import make_selector, rank_candidates
from .synth import SynthSpec, generate_state

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("relabel_sim")


class RuntimeFailure(RuntimeError):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def _options(args, defaults: dict) -> dict:
    """Defaults, then config file, then explicit flags."""
    cfg = _load_config(args.config)
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    opts = dict(defaults)
    opts.update(cfg)
    opts.update({k: v for k, v in vars(args).items() if k in defaults and v is not None})
    return opts


def _require(opts: dict, *keys):
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _parse_spec(value, what: str) -> dict:
    """A selector/posterior spec given as a kind name, a JSON object, or a dict."""
    if isinstance(value, dict):
        return dict(value)
    text = str(value).strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad {what} spec: {exc}") from exc
    return {"kind": text}


def _read_input(path) -> DatasetState:
    try:
        return read_dataset(path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from exc


def _load_matrix(value) -> np.ndarray:
    if isinstance(value, list):
        return np.asarray(value, dtype=float)
    text = str(value).strip()
    try:
        if text.startswith("["):
            return np.asarray(json.loads(text), dtype=float)
        if text.endswith(".json"):
            with open(text) as fh:
                return np.asarray(json.load(fh), dtype=float)
        return np.loadtxt(text, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read confusion bias {value}: {exc}") from exc


# --- commands -------------------------------------------------------------

SYNTH_DEFAULTS = {"classes": 4, "per_class": 500, "dim": 16, "spread": 1.0,
                  "separation": 4.0, "seed": 0, "out": None}


def cmd_synth(args) -> int:
    opts = _options(args, SYNTH_DEFAULTS)
    _require(opts, "out")
    try:
        spec = SynthSpec(num_classes=int(opts["classes"]), samples_per_class=int(opts["per_class"]),
                         embedding_dim=int(opts["dim"]), cluster_spread=float(opts["spread"]),
                         class_center_separation=float(opts["separation"]), seed=int(opts["seed"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    state = generate_state(spec)
    try:
        write_dataset(state, opts["out"])
    except OSError as exc:
        raise RuntimeFailure(f"cannot write {opts['out']}: {exc}") from exc
    log.info("wrote %d samples to %s", state.num_samples, opts["out"])
    return EXIT_OK


NOISE_DEFAULTS = {"dataset": None, "model": "temperature", "tau": 1.0, "rate": 0.0, "bias": None,
                  "seed": 0, "unmasked": False, "out": None, "report_dir": None}


def cmd_noise(args) -> int:
    opts = _options(args, NOISE_DEFAULTS)
    _require(opts, "dataset", "out")
    bias = None if opts["bias"] is None else _load_matrix(opts["bias"])
    try:
        spec = NoiseSpec(kind=str(opts["model"]), tau=float(opts["tau"]), rate=float(opts["rate"]),
                         confusion_bias=bias, seed=int(opts["seed"]), mask_true_class=not opts["unmasked"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    base = _read_input(opts["dataset"])
    try:
        state, report = inject_noise(base, spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(opts["out"])
    report_dir = Path(opts["report_dir"]) if opts["report_dir"] else out.parent
    stem = out.name.removesuffix(".jsonl")
    try:
        write_dataset(state, out)
        report_dir.mkdir(parents=True, exist_ok=True)
        write_json({"kind": report.kind, "realized_rate": report.realized_rate, "tau": spec.tau,
                    "rate": spec.rate, "seed": spec.seed, "num_samples": state.num_samples,
                    "confusion": report.confusion},
                   report_dir / f"{stem}.report.json")
        write_matrix_csv(report.confusion, report_dir / f"{stem}.confusion.csv", row_label="clean_class")
        if report.transitions is not None:
            # IDN rows belong to samples; the other models share one row per clean class
            if report.kind == "idn":
                write_matrix_csv(report.transitions, report_dir / f"{stem}.transitions.csv",
                                 row_label="sample_id", row_names=state.ids)
            else:
                write_matrix_csv(report.transitions, report_dir / f"{stem}.transitions.csv",
                                 row_label="clean_class")
    except OSError as exc:
        raise RuntimeFailure(f"cannot write noise outputs: {exc}") from exc
    log.info("realized noise rate %.4f", report.realized_rate)
    print(f"realized_rate={report.realized_rate:.9g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.config is None:
        raise ConfigError("simulate needs --config")
    try:
        seeds = None if args.seeds is None else [int(s) for s in args.seeds.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --seeds value {args.seeds!r}") from exc
    overrides = {"output_dir": args.output_dir, "seeds": seeds}
    cfg = ExperimentConfig.load(args.config, overrides)
    try:
        manifest = run_experiment(cfg, workers=args.workers)
    except RuntimeError as exc:
        raise RuntimeFailure(str(exc)) from exc
    log.info("completed %d runs into %s", len(manifest["runs"]), cfg.output_dir)
    return EXIT_OK


RANK_DEFAULTS = {"dataset": None, "posterior": "graph", "selector": "phi", "seed": 0, "out": None}


def cmd_rank(args) -> int:
    opts = _options(args, RANK_DEFAULTS)
    _require(opts, "dataset", "out")
    seed = int(opts["seed"])
    try:
        selector = make_selector(_parse_spec(opts["selector"], "selector"), seed=seed)
        estimator = make_posterior(_parse_spec(opts["posterior"], "posterior"), seed=seed) \
            if selector.needs_posterior else None
        if selector.kind == "bald" and not hasattr(estimator, "predict_members"):
            raise ConfigError("the bald selector needs an ensemble posterior")
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    state = _read_input(opts["dataset"])
    if not state.is_labelled():
        raise ConfigError("every sample needs at least one label to be ranked")
    posterior = None
    if estimator is not None:
        estimator.fit(state)
        posterior = estimator.predict(state)
    scores = selector.scores(state, estimator, posterior)
    ce, amb = selector.terms(state, estimator, posterior)
    ranking = rank_candidates(state, scores, ce, amb)
    try:
        Path(opts["out"]).parent.mkdir(parents=True, exist_ok=True)
        ranking.to_csv(opts["out"])
    except OSError as exc:
        raise RuntimeFailure(f"cannot write {opts['out']}: {exc}") from exc
    return EXIT_OK


# --- parser ---------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="relabel-sim", description="Active label cleaning simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic Gaussian-mixture dataset")
    s.add_argument("--config")
    s.add_argument("--classes", type=int)
    s.add_argument("--per-class", type=int)
    s.add_argument("--dim", type=int)
    s.add_argument("--spread", type=float)
    s.add_argument("--separation", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    n = sub.add_parser("noise", help="draw initial noisy labels for a dataset")
    n.add_argument("dataset", nargs="?")
    n.add_argument("--config")
    n.add_argument("--model", help="temperature, symmetric, class_dependent or idn")
    n.add_argument("--tau", type=float)
    n.add_argument("--rate", type=float)
    n.add_argument("--bias", help="C x C confusion bias: JSON list, .json file or .csv file")
    n.add_argument("--seed", type=int)
    n.add_argument("--unmasked", action="store_true", default=None,
                   help="IDN: let flip mass fall on the true class")
    n.add_argument("--out")
    n.add_argument("--report-dir")
    n.set_defaults(func=cmd_noise)

    m = sub.add_parser("simulate", help="run a selector x seed sweep from a JSON config")
    m.add_argument("--config")
    m.add_argument("--output-dir")
    m.add_argument("--seeds", help="comma-separated seeds overriding the config")
    m.add_argument("--workers", type=int, help="parallel runs (capped by RELABEL_SIM_THREADS)")
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("rank", help="rank samples for relabelling without simulating")
    r.add_argument("dataset", nargs="?")
    r.add_argument("--config")
    r.add_argument("--posterior", help="posterior kind or JSON spec")
    r.add_argument("--selector", help="selector kind or JSON spec")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_rank)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
