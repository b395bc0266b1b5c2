"""Dataset files and small CSV/JSON writers.

Dataset files are JSON lines: a header ``{"num_classes", "embedding_dim",
"num_samples"}`` followed by one record per sample with ``id``,
``embedding``, ``true_dist`` and ``counts``. Floats are written in
shortest round-trip form so a read reproduces the dataset exactly. Reports
and tables use 9 significant digits instead.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .core import DatasetState


def fmt(value) -> str:
    return f"{float(value):.9g}"


def round_floats(obj):
    """Round every float in a JSON-able structure to 9 significant digits."""
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(f"{v:.9g}") if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return round_floats(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def write_json(data, path):
    with open(path, "w") as fh:
        json.dump(round_floats(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_dataset(state: DatasetState, path):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        header = {"num_classes": state.num_classes, "embedding_dim": state.embedding_dim,
                  "num_samples": state.num_samples}
        fh.write(json.dumps(header) + "\n")
        for i, e, p, c in zip(state.ids, state.embeddings, state.true_dists, state.counts):
            rec = {"id": int(i), "embedding": e.tolist(), "true_dist": p.tolist(), "counts": c.tolist()}
            fh.write(json.dumps(rec) + "\n")


def read_dataset(path) -> DatasetState:
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    header = json.loads(lines[0])
    for key in ("num_classes", "embedding_dim", "num_samples"):
        if key not in header:
            raise ValueError(f"{path}: header lacks {key!r}")
    recs = [json.loads(ln) for ln in lines[1:]]
    if len(recs) != header["num_samples"]:
        raise ValueError(f"{path}: header says {header['num_samples']} samples, found {len(recs)}")
    C, L = header["num_classes"], header["embedding_dim"]
    for r in recs:
        if len(r["embedding"]) != L or len(r["true_dist"]) != C or len(r["counts"]) != C:
            raise ValueError(f"{path}: record {r.get('id')} does not match the header dimensions")
    return DatasetState(ids=np.array([r["id"] for r in recs], dtype=np.int64),
                        embeddings=np.array([r["embedding"] for r in recs], dtype=float).reshape(len(recs), L),
                        true_dists=np.array([r["true_dist"] for r in recs], dtype=float).reshape(len(recs), C),
                        counts=np.array([r["counts"] for r in recs], dtype=np.int64).reshape(len(recs), C))


def write_matrix_csv(matrix, path, row_label="row", col_prefix="c", row_names=None):
    M = np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([row_label] + [f"{col_prefix}{j}" for j in range(M.shape[1])])
        names = row_names if row_names is not None else range(M.shape[0])
        for name, row in zip(names, M):
            cells = [str(int(v)) if np.issubdtype(M.dtype, np.integer) else fmt(v) for v in row]
            w.writerow([int(name)] + cells)


def write_rows_csv(rows: list[dict], columns, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) if isinstance(r[c], (float, np.floating)) else r[c] for c in columns])
