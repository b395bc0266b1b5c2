"""kNN cosine graph and regularised label spreading."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SOLVERS = ("closed_form", "iterative")


@dataclass(frozen=True)
class GraphConfig:
    k_neighbors: int = 10
    mu: float = 0.0101
    solver: str = "closed_form"
    iterative_tol: float = 1e-8
    max_iters: int = 100_000

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be positive")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.iterative_tol <= 0 or self.max_iters < 1:
            raise ValueError("iterative_tol and max_iters must be positive")


class ConvergenceError(RuntimeError):
    pass


def cosine_affinity(a, b) -> np.ndarray:
    """``(1 + cos) / 2`` between the rows of ``a`` and ``b``."""
    a = a / np.linalg.norm(a, axis=1, keepdims=True)
    b = b / np.linalg.norm(b, axis=1, keepdims=True)
    return 0.5 * (1.0 + np.clip(a @ b.T, -1.0, 1.0))


def build_knn_graph(embeddings, cfg: GraphConfig = GraphConfig(), ids=None,
                    chunk_size: int = 1024) -> sp.csr_matrix:
    """Sparse symmetric affinity matrix over the K most similar neighbours.

    Neighbours are ranked by affinity with ties going to the lower index.
    Row-wise pruning is symmetrised by taking the elementwise maximum with
    the transpose; zero affinities (antipodal pairs) are dropped.
    """
    h = np.asarray(embeddings, dtype=float)
    n = len(h)
    K = cfg.k_neighbors
    if n < K + 1:
        raise ValueError(f"need at least K+1={K + 1} samples, got {n}")
    norms = np.linalg.norm(h, axis=1)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms == 0)[0])
        name = ids[bad] if ids is not None else bad
        raise ValueError(f"sample {name} has a zero-norm embedding")
    rows, cols, vals = [], [], []
    for start in range(0, n, chunk_size):
        stop = min(start + chunk_size, n)
        aff = cosine_affinity(h[start:stop], h)
        local = np.arange(stop - start)
        aff[local, start + local] = -np.inf
        # stable sort on negated affinity: ties keep ascending column index
        nbrs = np.argsort(-aff, axis=1, kind="stable")[:, :K]
        rows.append(np.repeat(np.arange(start, stop), K))
        cols.append(nbrs.ravel())
        vals.append(np.take_along_axis(aff, nbrs, axis=1).ravel())
    W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    W = W.maximum(W.T).tocsr()
    W.eliminate_zeros()
    W.sort_indices()
    return W


def normalized_adjacency(W) -> tuple[sp.csr_matrix, np.ndarray]:
    """``D^-1/2 W D^-1/2`` and the boolean mask of isolated nodes."""
    W = sp.csr_matrix(W)
    deg = np.asarray(W.sum(axis=1)).ravel()
    isolated = deg <= 0
    inv_sqrt = np.zeros_like(deg)
    inv_sqrt[~isolated] = 1.0 / np.sqrt(deg[~isolated])
    D = sp.diags(inv_sqrt)
    return (D @ W @ D).tocsr(), isolated


def spread_raw(W, Y, cfg: GraphConfig = GraphConfig()) -> np.ndarray:
    """Minimiser of the spreading objective, before any row renormalisation."""
    Y = np.asarray(Y, dtype=float)
    S, _ = normalized_adjacency(W)
    n = S.shape[0]
    mu = cfg.mu
    decay = 1.0 / (1.0 + mu)
    fidelity = mu / (1.0 + mu)
    if cfg.solver == "closed_form":
        A = (sp.identity(n, format="csc") - decay * S).tocsc()
        lu = spla.splu(A)
        F = lu.solve(np.ascontiguousarray(Y))
        F = np.asarray(F).reshape(Y.shape)
        assert np.all(np.isfinite(F)), "spreading system is singular"
        return fidelity * F
    F = Y.copy()
    target = fidelity * Y
    # ||S||_2 <= 1, so the distance to the fixed point is at most ||step|| / mu
    for _ in range(cfg.max_iters):
        nxt = decay * (S @ F) + target
        step = np.linalg.norm(nxt - F)
        F = nxt
        if step / mu <= cfg.iterative_tol:
            return F
    raise ConvergenceError(f"label spreading did not converge in {cfg.max_iters} iterations")


def spread_labels(W, Y, cfg: GraphConfig = GraphConfig(), fallback: Optional[np.ndarray] = None) -> np.ndarray:
    """Spread labels over the graph and return row-normalised posteriors.

    Nodes without edges keep ``fallback`` rows (default: their own row of
    ``Y``, normalised).
    """
    Y = np.asarray(Y, dtype=float)
    F = spread_raw(W, Y, cfg)
    _, isolated = normalized_adjacency(W)
    own = Y if fallback is None else np.asarray(fallback, dtype=float)
    F[isolated] = own[isolated]
    total = F.sum(axis=1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("a node received no label mass; every node needs a given label")
    return F / total
