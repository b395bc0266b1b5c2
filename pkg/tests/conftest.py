import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from relabel_sim.core import DatasetState

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_state(true_dists, labels=None, counts=None, embeddings=None, ids=None, seed=0) -> DatasetState:
    """Small dataset helper: one-hot labels or explicit counts, random embeddings."""
    P = np.asarray(true_dists, dtype=float)
    n, C = P.shape
    if counts is None:
        counts = np.zeros((n, C), dtype=np.int64)
        if labels is not None:
            counts[np.arange(n), labels] = 1
    if embeddings is None:
        embeddings = np.random.default_rng(seed).standard_normal((n, 3))
    ids = np.arange(n) if ids is None else ids
    return DatasetState(ids=ids, embeddings=embeddings, true_dists=P, counts=counts)


def random_dists(rng, n, C, alpha=1.0):
    return rng.dirichlet(np.full(C, alpha), size=n)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance criteria report --------------------------------------------------------

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.skipped:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "seconds": 0.0, "notes": []})
    entry["ok"] &= not rep.failed
    if rep.when == "call":
        entry["seconds"] += rep.duration
        entry["notes"] += [f"{k}={v}" for k, v in item.user_properties]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        notes = f"  [{', '.join(e['notes'])}]" if e["notes"] else ""
        terminalreporter.write_line(f"{'PASS' if e['ok'] else 'FAIL'}  criterion {number:2d}: "
                                    f"{e['title']} ({e['seconds']:.1f}s){notes}")
