import time

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from relabel_sim.noise import apply_transition_noise, symmetric_transition
from relabel_sim.posterior import (CoTeachingConfig, ConvergenceError, GraphConfig, GraphPosterior,
                                   SoftmaxHead, SoftmaxHeadConfig, build_knn_graph, empirical_posteriors,
                                   fit_co_teaching, fit_ensemble, fit_softmax_head, loss_and_grad,
                                   make_posterior, spread_labels, spread_raw)
from relabel_sim.posterior.graph import cosine_affinity
from relabel_sim.synth import SynthSpec, generate_state

from conftest import make_state


def numeric_grad(f, theta, h=1e-6):
    g = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        e = np.zeros_like(theta)
        e[idx] = h
        g[idx] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def two_clusters(n=200, gap=3.0, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    x = rng.standard_normal((n, 2)) * 0.5
    x[:, 0] += np.where(y == 0, -gap / 2, gap / 2)
    return x, y


def random_graph(n, seed, k=5):
    x = np.random.default_rng(seed).standard_normal((n, 4))
    return build_knn_graph(x, GraphConfig(k_neighbors=k))


# -- empirical -----------------------------------------------------------------

def test_empirical_examples():
    state = make_state([[1, 0], [0.5, 0.5], [0.7, 0.3]], counts=[[1, 0], [2, 2], [3, 1]])
    np.testing.assert_array_equal(empirical_posteriors(state), [[1, 0], [0.5, 0.5], [0.75, 0.25]])


# -- softmax head ----------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    C, N, L = 3, 10, 4
    x = rng.standard_normal((N, L))
    W = rng.standard_normal((C, L)) * 2
    b = rng.standard_normal(C)
    targets = rng.dirichlet(np.ones(C), size=N)
    alpha, wd = 3.0, 0.1
    _, gW, gb = loss_and_grad(W, b, x, targets, alpha, wd)
    nW = numeric_grad(lambda w: loss_and_grad(w, b, x, targets, alpha, wd)[0], W)
    nb = numeric_grad(lambda v: loss_and_grad(W, v, x, targets, alpha, wd)[0], b)
    for a, n in ((gW, nW), (gb, nb)):
        assert np.linalg.norm(a - n) <= 1e-5 * max(np.linalg.norm(n), 1e-12)


def test_zero_epochs_gives_uniform():
    x, y = two_clusters()
    head = fit_softmax_head(x, y, SoftmaxHeadConfig(epochs=0))
    np.testing.assert_array_equal(head.predict_proba(x), 0.5)


def test_separable_clusters_fit():
    x, y = two_clusters(gap=4.0)
    # brute-force oracle: a grid of linear separators through the data finds a perfect one
    best = 0.0
    for ang in np.linspace(0, np.pi, 181):
        proj = x @ np.array([np.cos(ang), np.sin(ang)])
        for thr in np.quantile(proj, np.linspace(0.01, 0.99, 99)):
            acc = np.mean((proj > thr) == (y == 1))
            best = max(best, acc, 1 - acc)
    assert best == 1.0
    head = fit_softmax_head(x, y, SoftmaxHeadConfig(epochs=100))
    assert np.mean(head.predict(x) == y) >= 0.99


@given(st.integers(0, 1000), st.floats(0.5, 20.0))
def test_logits_bounded_by_alpha(seed, alpha):
    rng = np.random.default_rng(seed)
    head = SoftmaxHead(rng.standard_normal((3, 4)) * 50, rng.standard_normal(3) * 50, alpha)
    z = head.logits(rng.standard_normal((20, 4)) * 10)
    assert np.all(np.abs(z) <= alpha)
    np.testing.assert_allclose(head.predict_proba(rng.standard_normal((5, 4))).sum(axis=1), 1.0, atol=1e-12)


@given(st.integers(0, 1000))
def test_full_batch_loss_non_increasing(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((60, 4))
    y = rng.integers(0, 3, 60)
    y[:3] = [0, 1, 2]
    head = fit_softmax_head(x, y, SoftmaxHeadConfig(epochs=30, batch_size=60))
    assert np.all(np.diff(head.loss_history) <= 1e-6)


def test_training_input_errors():
    x, y = two_clusters(20)
    bad = x.copy()
    bad[3, 1] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        fit_softmax_head(bad, y)
    with pytest.raises(ValueError, match="absent"):
        fit_softmax_head(x, np.zeros(20, dtype=int), num_classes=2)


def test_head_deterministic_and_csv_round_trip(tmp_path):
    x, y = two_clusters(100)
    a = fit_softmax_head(x, y, SoftmaxHeadConfig(epochs=5, batch_size=16, seed=3))
    b = fit_softmax_head(x, y, SoftmaxHeadConfig(epochs=5, batch_size=16, seed=3))
    assert a.weights.tobytes() == b.weights.tobytes()
    a.to_csv(tmp_path / "w.csv")
    back = SoftmaxHead.from_csv(tmp_path / "w.csv")
    assert back.weights.tobytes() == a.weights.tobytes() and back.bias.tobytes() == a.bias.tobytes()


# -- co-teaching and ensembles ------------------------------------------------------

def test_coteaching_without_drop_is_two_plain_heads():
    x, y = two_clusters(150)
    hc = SoftmaxHeadConfig(epochs=8, batch_size=32)
    model = fit_co_teaching(x, y, CoTeachingConfig(hc, drop_rate=0.0, seeds=(4, 9)))
    for member, s in zip(model.members, (4, 9)):
        plain = fit_softmax_head(x, y, SoftmaxHeadConfig(epochs=8, batch_size=32, seed=s))
        assert member.weights.tobytes() == plain.weights.tobytes()
        assert member.bias.tobytes() == plain.bias.tobytes()
    ens = fit_ensemble(x, y, hc, members=2, bootstrap=False, seeds=[4, 9])
    assert model.predict_proba(x).tobytes() == ens.predict_proba(x).tobytes()


def test_coteaching_long_warmup_equals_no_drop():
    x, y = two_clusters(150)
    hc = SoftmaxHeadConfig(epochs=6, batch_size=32)
    a = fit_co_teaching(x, y, CoTeachingConfig(hc, drop_rate=0.3, warmup_epochs=6))
    b = fit_co_teaching(x, y, CoTeachingConfig(hc, drop_rate=0.0))
    assert a.predict_proba(x).tobytes() == b.predict_proba(x).tobytes()


def test_coteaching_resists_symmetric_noise():
    gains = []
    for seed in range(5):
        x, y = two_clusters(600, gap=2.5, seed=seed)
        noisy = apply_transition_noise(y, np.arange(600), symmetric_transition(2, 0.3), seed=seed)
        xt, yt = two_clusters(1000, gap=2.5, seed=100 + seed)
        hc = SoftmaxHeadConfig(epochs=40, seed=seed)
        plain = fit_softmax_head(x, noisy, hc)
        co = fit_co_teaching(x, noisy, CoTeachingConfig(hc, drop_rate=0.3, warmup_epochs=5,
                                                        seeds=(seed, seed + 50)))
        gains.append(np.mean(np.argmax(co.predict_proba(xt), 1) == yt) - np.mean(plain.predict(xt) == yt))
    assert np.mean(gains) >= 0.0


def test_ensemble_identical_members_without_bootstrap():
    x, y = two_clusters(80)
    ens = fit_ensemble(x, y, SoftmaxHeadConfig(epochs=4), members=2, bootstrap=False, seeds=[1, 1])
    m = ens.predict_members(x)
    assert m[0].tobytes() == m[1].tobytes()


def test_ensemble_agrees_on_clean_separable_data():
    x, y = two_clusters(400, gap=5.0)
    xt, _ = two_clusters(200, gap=5.0, seed=9)
    m = fit_ensemble(x, y, SoftmaxHeadConfig(epochs=40), members=5, seed=2).predict_members(xt)
    tv = max(0.5 * np.abs(m[i] - m[j]).sum(axis=1).max() for i in range(5) for j in range(i + 1, 5))
    assert tv <= 0.05


def test_ensemble_timing_default_scale():
    state = generate_state(SynthSpec())
    y = np.argmax(state.true_dists, axis=1)
    t0 = time.perf_counter()
    fit_ensemble(state.embeddings, y, SoftmaxHeadConfig(), members=5)
    assert time.perf_counter() - t0 < 10.0


def test_ensemble_needs_two_members():
    x, y = two_clusters(20)
    with pytest.raises(ValueError):
        fit_ensemble(x, y, members=1)


# -- kNN graph -------------------------------------------------------------------

def test_identical_embeddings_affinity_one():
    W = build_knn_graph(np.array([[1.0, 2.0], [1.0, 2.0]]), GraphConfig(k_neighbors=1))
    assert W[0, 1] == pytest.approx(1.0) and W[1, 0] == pytest.approx(1.0)


def test_antipodal_pairs_pruned():
    W = build_knn_graph(np.array([[1.0, 0.0], [-1.0, 0.0]]), GraphConfig(k_neighbors=1))
    assert W.nnz == 0


def test_knn_structure_against_brute_force(rng):
    x = rng.standard_normal((50, 5))
    K = 6
    W = build_knn_graph(x, GraphConfig(k_neighbors=K)).toarray()
    np.testing.assert_array_equal(W, W.T)
    assert np.all(np.diag(W) == 0)
    assert np.all((W > 0).sum(axis=1) >= K)
    # brute-force all-pairs oracle
    A = np.array([[0.5 * (1 + a @ b / np.linalg.norm(a) / np.linalg.norm(b)) for b in x] for a in x])
    np.fill_diagonal(A, -np.inf)
    keep = np.zeros_like(A, dtype=bool)
    for i in range(50):
        keep[i, np.argsort(-A[i], kind="stable")[:K]] = True
    keep |= keep.T
    expected = np.where(keep, A, 0.0)
    np.testing.assert_allclose(W, expected, atol=1e-12)
    assert np.all((W[W > 0] > 0) & (W[W > 0] <= 1))


def test_zero_norm_embedding_names_sample():
    x = np.ones((5, 3))
    x[2] = 0.0
    with pytest.raises(ValueError, match="sample 42"):
        build_knn_graph(x, GraphConfig(k_neighbors=2), ids=np.array([40, 41, 42, 43, 44]))


def test_cosine_affinity_range(rng):
    A = cosine_affinity(rng.standard_normal((10, 3)), rng.standard_normal((7, 3)))
    assert A.shape == (10, 7) and np.all((A >= 0) & (A <= 1))


# -- label spreading -----------------------------------------------------------------

def test_two_node_spreading_exact():
    W = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    for solver in ("closed_form", "iterative"):
        F = spread_labels(W, np.eye(2), GraphConfig(mu=1.0, solver=solver, iterative_tol=1e-14))
        np.testing.assert_allclose(F, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-12)
    raw = spread_raw(W, np.eye(2), GraphConfig(mu=1.0))
    np.testing.assert_allclose(raw, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-12)


def test_large_mu_returns_labels(rng):
    W = random_graph(30, 1)
    Y = np.eye(3)[rng.integers(0, 3, 30)]
    np.testing.assert_allclose(spread_raw(W, Y, GraphConfig(mu=1e9)), Y, atol=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_solvers_agree(seed):
    rng = np.random.default_rng(seed)
    W = random_graph(50, seed)
    Y = np.eye(4)[rng.integers(0, 4, 50)]
    a = spread_labels(W, Y, GraphConfig(solver="closed_form"))
    b = spread_labels(W, Y, GraphConfig(solver="iterative"))
    assert np.max(np.abs(a - b)) <= 1e-8


@given(st.integers(0, 10_000))
def test_spreading_is_linear(seed):
    rng = np.random.default_rng(seed)
    W = random_graph(25, seed % 50)
    Y1, Y2 = rng.random((25, 3)), rng.random((25, 3))
    cfg = GraphConfig(mu=0.5)
    np.testing.assert_allclose(spread_raw(W, Y1 + Y2, cfg), spread_raw(W, Y1, cfg) + spread_raw(W, Y2, cfg),
                               atol=1e-9)


def test_spread_rows_are_distributions(rng):
    W = random_graph(40, 3)
    F = spread_labels(W, np.eye(3)[rng.integers(0, 3, 40)])
    np.testing.assert_allclose(F.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(F >= 0)


def test_isolated_node_keeps_own_labels():
    W = sp.csr_matrix(np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=float))
    fallback = np.array([[1, 0], [0, 1], [0.25, 0.75]])
    F = spread_labels(W, np.array([[1, 0], [0, 1], [0, 1.0]]), GraphConfig(mu=1.0), fallback=fallback)
    np.testing.assert_allclose(F[2], [0.25, 0.75])


def test_iterative_non_convergence_raises():
    W = random_graph(30, 0)
    with pytest.raises(ConvergenceError):
        spread_raw(W, np.eye(3)[np.arange(30) % 3], GraphConfig(solver="iterative", max_iters=3))


def test_graph_posterior_updates_without_refit(rng):
    state = generate_state(SynthSpec(samples_per_class=30, seed=1))
    state = state.with_labels(state.true_labels())
    est = GraphPosterior(GraphConfig(k_neighbors=5))
    est.fit(state)
    W = est.W
    before = est.predict(state)
    state.counts[0] = 0
    state.counts[0, (state.true_labels()[0] + 1) % 4] = 3
    est.update(state)
    assert est.W is W
    after = est.predict(state)
    Y = np.eye(4)[state.majority_labels()]
    np.testing.assert_allclose(after, spread_labels(W, Y, GraphConfig(k_neighbors=5)), atol=1e-12)
    assert not np.allclose(before, after)


# -- estimator factory ---------------------------------------------------------------

@pytest.mark.parametrize("kind", ["empirical", "uniform", "softmax", "coteaching", "ensemble", "graph"])
def test_make_posterior_rows_are_distributions(kind):
    state = generate_state(SynthSpec(samples_per_class=25, seed=2))
    state = state.with_labels(state.true_labels())
    est = make_posterior({"kind": kind, "epochs": 5, "members": 3, "k_neighbors": 5}, seed=1)
    est.fit(state)
    P = est.predict(state)
    assert P.shape == (100, 4)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
    est.update(state)
    assert np.all(est.predict(state) >= 0)


def test_make_posterior_rejects_unknown():
    with pytest.raises(ValueError):
        make_posterior({"kind": "mystery"})
