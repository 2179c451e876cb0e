from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import complete_graph, graphs
from resonant_gnn.errors import ConfigError, ParseError
from resonant_gnn.graph import (Graph, Perturbation, apply_perturbation, gen_sbm, load_graph, node_stats,
                                parse_sbm_spec, propagation_operator, save_edge_list, save_matrix_csv,
                                strength_distribution)


def brute_stats(g):
    """Degrees, two-walk counts and neighbour-edge counts by enumeration."""
    nb = [set() for _ in range(g.n)]
    for u, v in g.edges:
        nb[u].add(v)
        nb[v].add(u)
    deg = [len(s) for s in nb]
    p = [sum(1 for j in nb[i] for _ in nb[j]) for i in range(g.n)]
    t = [sum(1 for a, b in combinations(sorted(nb[i]), 2) if b in nb[a]) for i in range(g.n)]
    return np.array(deg, float), np.array(p, float), np.array(t, float)


class TestNodeStats:
    def test_k3(self, k3):
        s = node_stats(k3)
        np.testing.assert_array_equal(s.deg, [2, 2, 2])
        np.testing.assert_array_equal(s.p, [4, 4, 4])
        np.testing.assert_array_equal(s.t, [1, 1, 1])

    def test_p3_center(self, p3):
        s = node_stats(p3)
        assert (s.deg[1], s.p[1], s.t[1]) == (2, 2, 0)

    def test_star_center(self, star3):
        s = node_stats(star3)
        assert (s.deg[0], s.p[0], s.t[0]) == (3, 3, 0)

    @settings(max_examples=60, deadline=None)
    @given(graphs(max_n=12, with_data=False))
    def test_matches_enumeration(self, g):
        s = node_stats(g)
        deg, p, t = brute_stats(g)
        np.testing.assert_array_equal(s.deg, deg)
        np.testing.assert_array_equal(s.p, p)
        np.testing.assert_array_equal(s.t, t)
        assert s.deg.sum() == 2 * g.num_edges
        assert np.all(s.p >= s.deg)
        n_triangles = sum(1 for a, b, c in combinations(range(g.n), 3)
                          if {(a, b), (a, c), (b, c)} <= g.edges)
        assert s.t.sum() == 3 * n_triangles


class TestGraph:
    @settings(max_examples=40, deadline=None)
    @given(graphs(max_n=10, with_data=False))
    def test_adjacency_symmetric_zero_diagonal(self, g):
        a = g.adjacency
        np.testing.assert_array_equal(a, a.T)
        assert not np.diag(a).any()
        assert set(zip(*np.nonzero(np.triu(a)))) == set(g.edges)

    def test_self_loop_rejected(self):
        with pytest.raises(ConfigError):
            Graph.from_edges(3, [(1, 1)])

    def test_label_rows_must_be_one_hot(self):
        with pytest.raises(ConfigError):
            Graph.from_edges(2, [(0, 1)], labels=[[1, 1], [0, 1]])

    def test_withheld_label_rows_allowed(self):
        g = Graph.from_edges(2, [(0, 1)], labels=[[0, 0], [0, 1]])
        assert g.num_classes == 2

    def test_from_adjacency_roundtrip(self, k3):
        assert Graph.from_adjacency(k3.adjacency).edges == k3.edges


class TestPropagationOperator:
    def test_k2_raw(self):
        g = complete_graph(2)
        np.testing.assert_array_equal(propagation_operator(g, "raw_adjacency"), [[0, 1], [1, 0]])

    def test_k2_sym_norm(self):
        g = complete_graph(2)
        np.testing.assert_allclose(propagation_operator(g, "sym_norm_selfloops"), np.full((2, 2), 0.5))

    def test_isolated_node(self):
        g = Graph.from_edges(1, [])
        np.testing.assert_array_equal(propagation_operator(g, "sym_norm_selfloops"), [[1.0]])

    def test_unknown(self, k3):
        with pytest.raises(ConfigError):
            propagation_operator(k3, "laplacian")


class TestPerturbation:
    def test_toggle_off(self, k3):
        g = apply_perturbation(k3, Perturbation.of([(0, 1)]))
        assert g.edges == {(0, 2), (1, 2)}
        assert k3.num_edges == 3

    def test_toggle_on(self, p3):
        assert apply_perturbation(p3, Perturbation.of([(2, 0)])).edges == complete_graph(3).edges

    @settings(max_examples=40, deadline=None)
    @given(graphs(min_n=2, max_n=8, with_data=False))
    def test_involution(self, g):
        flips = [(0, g.n - 1), (0, 1)]
        p = Perturbation.of(flips)
        assert apply_perturbation(apply_perturbation(g, p), p).edges == g.edges

    def test_self_pair_rejected(self):
        with pytest.raises(ConfigError):
            Perturbation.of([(2, 2)])

    def test_budget_enforced(self):
        with pytest.raises(ConfigError):
            Perturbation.of([(0, 1), (1, 2)], budget=1)

    def test_out_of_range(self, k3):
        with pytest.raises(ConfigError):
            apply_perturbation(k3, Perturbation.of([(0, 7)]))


class TestStrength:
    def test_unweighted_k3(self, k3):
        np.testing.assert_array_equal(strength_distribution(k3.adjacency), [2, 2, 2])

    def test_zero(self):
        np.testing.assert_array_equal(strength_distribution(np.zeros((3, 3))), np.zeros(3))

    def test_weighted(self):
        np.testing.assert_array_equal(strength_distribution([[0, 0.5], [0.5, 0]]), [0.5, 0.5])


class TestSbm:
    def test_degenerate_blocks(self):
        g = gen_sbm([3, 3], 1.0, 0.0)
        assert g.edges == {(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)}
        np.testing.assert_array_equal(g.label_index, [0, 0, 0, 1, 1, 1])

    def test_empty(self):
        assert gen_sbm([4, 4], 0.0, 0.0).num_edges == 0

    def test_edge_count_near_expectation(self):
        g = gen_sbm([50, 50], 0.2, 0.02, seed=7)
        n_in, n_out = 2 * 50 * 49 // 2, 2500
        mean = 0.2 * n_in + 0.02 * n_out
        sd = np.sqrt(0.2 * 0.8 * n_in + 0.02 * 0.98 * n_out)
        assert abs(g.num_edges - mean) < 3 * sd

    def test_deterministic(self):
        a, b = gen_sbm([5, 5], 0.5, 0.1, seed=3), gen_sbm([5, 5], 0.5, 0.1, seed=3)
        assert a.edges == b.edges
        np.testing.assert_array_equal(a.features, b.features)

    @pytest.mark.parametrize("blocks, p_in, p_out", [([], 0.5, 0.1), ([3, 0], 0.5, 0.1), ([3], 0.1, 0.5)])
    def test_bad_config(self, blocks, p_in, p_out):
        with pytest.raises(ConfigError):
            gen_sbm(blocks, p_in, p_out)

    def test_spec_string(self):
        assert parse_sbm_spec("sbm:50,50") == [50, 50]
        with pytest.raises(ConfigError):
            parse_sbm_spec("er:10")


class TestLoadGraph:
    def test_path_graph(self, tmp_path):
        f = tmp_path / "e.txt"
        f.write_text("0 1\n1 2\n")
        g = load_graph(f)
        assert g.n == 3 and g.edges == {(0, 1), (1, 2)}

    def test_duplicates_and_comments(self, tmp_path):
        f = tmp_path / "e.txt"
        f.write_text("# header\n0 1\n1 0  # reversed\n\n")
        assert load_graph(f).edges == {(0, 1)}

    def test_short_feature_file(self, tmp_path):
        e, x = tmp_path / "e.txt", tmp_path / "x.csv"
        e.write_text("0 1\n1 2\n")
        x.write_text("1,0\n0,1\n")
        with pytest.raises(ParseError, match="x.csv"):
            load_graph(e, x)

    def test_bad_token_names_line(self, tmp_path):
        f = tmp_path / "e.txt"
        f.write_text("0 1\n1 b\n")
        with pytest.raises(ParseError, match=":2:"):
            load_graph(f)

    def test_non_contiguous(self, tmp_path):
        f = tmp_path / "e.txt"
        f.write_text("0 1\n3 1\n")
        with pytest.raises(ParseError, match="contiguous"):
            load_graph(f)

    def test_label_not_one_hot(self, tmp_path):
        e, y = tmp_path / "e.txt", tmp_path / "y.csv"
        e.write_text("0 1\n")
        y.write_text("1,0\n1,1\n")
        with pytest.raises(ParseError, match="y.csv:2"):
            load_graph(e, labels_path=y)

    def test_ragged_rows(self, tmp_path):
        e, x = tmp_path / "e.txt", tmp_path / "x.csv"
        e.write_text("0 1\n")
        x.write_text("1,0\n0\n")
        with pytest.raises(ParseError, match="x.csv:2"):
            load_graph(e, x)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError, match="nope.txt"):
            load_graph(tmp_path / "nope.txt")

    def test_roundtrip(self, tmp_path):
        g = gen_sbm([4, 4], 0.6, 0.2, seed=1)
        save_edge_list(g, tmp_path / "e.txt")
        save_matrix_csv(g.features, tmp_path / "x.csv")
        save_matrix_csv(g.labels, tmp_path / "y.csv", fmt="g")
        h = load_graph(tmp_path / "e.txt", tmp_path / "x.csv", tmp_path / "y.csv")
        assert h.edges == g.edges
        np.testing.assert_array_equal(h.features, g.features)
        np.testing.assert_array_equal(h.labels, g.labels)
