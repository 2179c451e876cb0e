import numpy as np
import pytest
from hypothesis import strategies as st

from resonant_gnn.graph import Graph


def complete_graph(n, features=None, labels=None):
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)], features, labels)


def random_graph(rng, n, p=0.3, d=3, classes=2):
    """Erdos-Renyi graph with Gaussian features and random one-hot labels."""
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    feats = rng.normal(size=(n, d))
    labels = np.eye(classes)[rng.integers(0, classes, n)]
    return Graph.from_edges(n, zip(iu[keep].tolist(), ju[keep].tolist()), feats, labels)


@pytest.fixture
def k3():
    return complete_graph(3, np.eye(3), np.eye(2)[[0, 0, 1]])


@pytest.fixture
def p3():
    return Graph.from_edges(3, [(0, 1), (1, 2)], np.eye(3), np.eye(2)[[0, 0, 1]])


@pytest.fixture
def star3():
    """Star with centre 0 and leaves 1, 2, 3."""
    return Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)], np.eye(4), np.eye(2)[[0, 1, 1, 1]])


@pytest.fixture
def two_triangles():
    edges = [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]
    labels = np.eye(2)[[0, 0, 0, 1, 1, 1]]
    feats = np.random.default_rng(0).normal(size=(6, 3))
    return Graph.from_edges(6, edges, feats, labels)


@pytest.fixture
def six_node():
    """Small connected graph with a triangle, a pendant and a 4-cycle."""
    edges = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (4, 5), (5, 2)]
    rng = np.random.default_rng(3)
    return Graph.from_edges(6, edges, rng.normal(size=(6, 3)), np.eye(2)[[0, 0, 0, 1, 1, 1]])


@st.composite
def graphs(draw, min_n=1, max_n=12, with_data=True):
    n = draw(st.integers(min_n, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    edges = [p for p, keep in zip(pairs, mask) if keep]
    if not with_data:
        return Graph.from_edges(n, edges)
    seed = draw(st.integers(0, 2**16))
    rng = np.random.default_rng(seed)
    return Graph.from_edges(n, edges, rng.normal(size=(n, 3)), np.eye(2)[rng.integers(0, 2, n)])


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
