import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import complete_graph, graphs, random_graph
from resonant_gnn import numkernel as nk
from resonant_gnn.edgesignal import (EdgeSignalSet, PropagationCache, PropagationCounter, edge_index,
                                     edge_signal, edge_signal_set, edge_signals_tensor, epsilon_matrix,
                                     epsilon_signal, repropagate_fast, repropagate_oracle)
from resonant_gnn.errors import ConfigError
from resonant_gnn.graph import Graph
from resonant_gnn.lrs import extract_lrs


class TestRepropagate:
    def test_k3_oracle(self):
        out = repropagate_oracle(complete_graph(3), np.eye(3), 0, 1)
        np.testing.assert_array_equal(out[0], [0, 0, 1])

    def test_k3_fast(self):
        g = complete_graph(3)
        expected = [[0, 0, 1], [0, 0, 1], [1, 1, 0]]
        np.testing.assert_array_equal(repropagate_fast(g, np.eye(3), 0, 1), expected)
        np.testing.assert_array_equal(repropagate_oracle(g, np.eye(3), 1, 0), expected)

    @pytest.mark.parametrize("fn", [repropagate_oracle, repropagate_fast])
    def test_zero(self, fn, k3):
        np.testing.assert_array_equal(fn(k3, np.zeros((3, 2)), 0, 2), np.zeros((3, 2)))

    @pytest.mark.parametrize("fn", [repropagate_oracle, repropagate_fast])
    def test_non_edge(self, fn, p3):
        with pytest.raises(ConfigError):
            fn(p3, np.ones((3, 2)), 0, 2)

    @settings(max_examples=40, deadline=None)
    @given(graphs(min_n=2, max_n=12, with_data=False), st.integers(0, 1000))
    def test_locality(self, g, seed):
        zw = np.random.default_rng(seed).normal(size=(g.n, 2))
        full = g.adjacency @ zw
        for j, k in g.sorted_edges:
            out = repropagate_oracle(g, zw, j, k)
            keep = np.ones(g.n, bool)
            keep[[j, k]] = False
            np.testing.assert_array_equal(out[keep], full[keep])

    @settings(max_examples=40, deadline=None)
    @given(graphs(min_n=2, max_n=20, with_data=False), st.integers(0, 1000))
    def test_fast_equals_oracle(self, g, seed):
        zw = np.random.default_rng(seed).normal(size=(g.n, 3))
        cache = PropagationCache(g, zw)
        for j, k in g.sorted_edges:
            np.testing.assert_allclose(repropagate_fast(g, zw, j, k, cache), repropagate_oracle(g, zw, j, k),
                                       rtol=0, atol=1e-12)

    def test_cache_counts_one_product(self):
        g = random_graph(np.random.default_rng(0), 12, 0.4)
        counter = PropagationCounter()
        cache = PropagationCache(g, np.ones((12, 2)), counter)
        for j, k in g.sorted_edges:
            repropagate_fast(g, np.ones((12, 2)), j, k, cache)
        assert counter.count == 1


class TestEdgeSignal:
    def test_epsilon_range(self):
        e = edge_signal((np.zeros(50), np.zeros(50)), None, 0, edge=(3, 1), seed=2)
        assert e.shape == (50,) and np.all((e >= 0) & (e < 1e-7))

    def test_k3_hand_value(self):
        g = complete_graph(3)
        z = g.adjacency @ np.eye(3)
        r = repropagate_oracle(g, np.eye(3), 0, 1)
        np.testing.assert_allclose(edge_signal((z[0], z[1]), (r[0], r[1]), 1), [0.5, 0.5, 0])

    def test_single_anchoring(self):
        g = complete_graph(3)
        z = g.adjacency @ np.eye(3)
        r = repropagate_oracle(g, np.eye(3), 0, 1)
        np.testing.assert_array_equal(edge_signal((z[0], z[1]), (r[0], r[1]), 1, "single"), [0, 1, 0])

    def test_zero_signal(self, k3):
        z = np.zeros((3, 2))
        np.testing.assert_array_equal(edge_signal((z[0], z[1]), (z[0], z[1]), 2), [0, 0])

    def test_unknown_anchoring(self):
        with pytest.raises(ConfigError):
            edge_signal((np.ones(2), np.ones(2)), (np.ones(2), np.ones(2)), 1, "both")

    def test_epsilon_is_order_independent(self):
        assert np.array_equal(epsilon_signal(4, 2, 5, seed=1), epsilon_signal(2, 4, 5, seed=1))
        assert not np.array_equal(epsilon_signal(2, 4, 5, seed=1), epsilon_signal(2, 4, 5, seed=2))


class TestEdgeSignalSet:
    def test_isolated_center(self):
        g = Graph.from_edges(3, [(1, 2)])
        s = edge_signal_set(g, np.ones((3, 2)), extract_lrs(g, center=0), 1)
        assert s.signals == {}

    def test_k3_layer0(self):
        g = complete_graph(3)
        s = edge_signal_set(g, np.zeros((3, 4)), extract_lrs(g, center=0), 0)
        assert sorted(s.signals) == [(0, 1), (0, 2), (1, 2)]
        assert all(np.all((v >= 0) & (v < 1e-7)) for v in s.signals.values())

    def test_only_base_edges(self, star3):
        lrs = extract_lrs(star3, center=1)
        s = edge_signal_set(star3, np.ones((4, 2)), lrs, 1)
        assert set(s.signals) == {(0, 1)}

    @pytest.mark.parametrize("anchoring", ["symmetric", "single"])
    @pytest.mark.parametrize("seed", range(10))
    def test_fast_matches_oracle(self, seed, anchoring):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, int(rng.integers(2, 21)), 0.3)
        zw = rng.normal(size=(g.n, 3))
        for c in range(g.n):
            lrs = extract_lrs(g, center=c)
            fast = edge_signal_set(g, zw, lrs, 2, anchoring)
            oracle = edge_signal_set(g, zw, lrs, 2, anchoring, oracle=True)
            assert fast.provenance == "fast" and oracle.provenance == "oracle"
            assert list(fast.signals) == list(oracle.signals) == lrs.base_edges
            for e in fast.signals:
                np.testing.assert_allclose(fast.signals[e], oracle.signals[e], rtol=0, atol=1e-12)

    def test_csv_dump(self, tmp_path):
        s = EdgeSignalSet(1, {(0, 1): np.array([0.5, 1.0])}, "fast")
        s.to_csv(tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text() == "0,1,0.5,1\n"


class TestBatchedSignals:
    @pytest.mark.parametrize("anchoring", ["symmetric", "single"])
    def test_matches_per_edge(self, anchoring):
        rng = np.random.default_rng(7)
        g = random_graph(rng, 15, 0.3)
        zw = rng.normal(size=(15, 4))
        heads, tails = edge_index(g.sorted_edges)
        counter = PropagationCounter()
        batch = edge_signals_tensor(g.adjacency, nk.Tensor(zw), heads, tails, anchoring, counter).value
        assert counter.count == 1
        full = g.adjacency @ zw
        for row, (j, k) in zip(batch, g.sorted_edges):
            r = repropagate_oracle(g, zw, j, k)
            np.testing.assert_allclose(row, edge_signal((full[j], full[k]), (r[j], r[k]), 1, anchoring),
                                       atol=1e-12)

    def test_gradient(self, six_node):
        heads, tails = edge_index(six_node.sorted_edges)
        zw = np.random.default_rng(1).uniform(-1, 1, (6, 2))
        proj = np.random.default_rng(2).normal(size=(2, 1))
        f = lambda t: nk.sum_all(nk.activation(
            nk.matmul(edge_signals_tensor(six_node.adjacency, t, heads, tails), proj), "sigmoid"))
        assert nk.finite_diff_check(f, zw) < 1e-4

    def test_epsilon_matrix(self):
        m = epsilon_matrix([(0, 1), (1, 2)], 3, seed=4)
        np.testing.assert_array_equal(m[1], epsilon_signal(1, 2, 3, seed=4))
        assert epsilon_matrix([], 3).shape == (0, 3)
