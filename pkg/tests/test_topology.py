import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbsgd.topology import (
    MixingMatrix,
    TopologyError,
    build_graph,
    load_edge_list,
    make_topology,
    metropolis_weights,
    sample_active_topology,
    spectral_gap,
)


def dense_rho(w):
    ev = np.sort(np.abs(np.linalg.eigvalsh(w)))
    return ev[-2]


class TestBuildGraph:
    def test_ring4(self):
        t = build_graph("ring", 4)
        assert set(t.edges) == {(0, 1), (1, 2), (2, 3), (0, 3)}
        assert len(t.matchings) == 2

    def test_complete4(self):
        t = build_graph("complete", 4)
        assert len(t.edges) == 6
        # greedy coloring of K4 in sorted edge order, traced by hand
        assert t.matchings == (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)))

    def test_ring2(self):
        t = build_graph("ring", 2)
        assert t.edges == ((0, 1),)
        assert len(t.matchings) == 1

    def test_disconnected_edge_list(self):
        with pytest.raises(TopologyError):
            build_graph("edge_list", 4, edges=[(0, 1), (2, 3)])

    def test_self_loop_rejected(self):
        with pytest.raises(TopologyError):
            build_graph("edge_list", 3, edges=[(0, 0), (0, 1), (1, 2)])

    def test_retry_exhaustion(self):
        with pytest.raises(TopologyError):
            build_graph("erdos_renyi", 30, p=0.01, seed=0, max_retries=5)

    def test_erdos_renyi_seeded(self):
        assert build_graph("erdos_renyi", 8, p=0.35, seed=4) == build_graph("erdos_renyi", 8, p=0.35, seed=4)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 14), st.floats(0.2, 1.0), st.integers(0, 10_000))
    def test_matchings_partition_edges(self, P, p, seed):
        t = build_graph("erdos_renyi", P, p=p, seed=seed)
        flat = [e for m in t.matchings for e in m]
        assert sorted(flat) == list(t.edges)
        for m in t.matchings:
            nodes = [v for e in m for v in e]
            assert len(nodes) == len(set(nodes))

    def test_edge_list_file(self, tmp_path):
        path = tmp_path / "g.txt"
        path.write_text("# star\n0 1\n0 2\n\n0 3\n")
        t = build_graph("edge_list", 4, edges=load_edge_list(path))
        assert t.edges == ((0, 1), (0, 2), (0, 3))

    def test_edge_list_bad_line(self, tmp_path):
        path = tmp_path / "g.txt"
        path.write_text("0 1\n0 1 2\n")
        with pytest.raises(TopologyError, match=":2:"):
            load_edge_list(path)


class TestMetropolis:
    def test_ring4(self):
        np.testing.assert_allclose(metropolis_weights(build_graph("ring", 4)).weights,
                                   [[1/3, 1/3, 0, 1/3], [1/3, 1/3, 1/3, 0],
                                    [0, 1/3, 1/3, 1/3], [1/3, 0, 1/3, 1/3]], atol=1e-15)

    def test_complete4(self):
        np.testing.assert_allclose(metropolis_weights(build_graph("complete", 4)).weights, 0.25, atol=1e-15)

    def test_star4(self):
        w = metropolis_weights(build_graph("edge_list", 4, edges=[(0, 1), (0, 2), (0, 3)])).weights
        assert w[0, 0] == pytest.approx(0.25)
        for j in (1, 2, 3):
            assert w[0, j] == pytest.approx(0.25)
            assert w[j, j] == pytest.approx(0.75)

    def test_disconnected_rejected(self):
        with pytest.raises(TopologyError):
            metropolis_weights(make_topology(4, [(0, 1), (2, 3)], require_connected=False))

    def test_isolated_node_identity_row(self):
        active = make_topology(4, [(0, 1)], require_connected=False)
        w = metropolis_weights(active, allow_disconnected=True).weights
        np.testing.assert_array_equal(w[2], [0, 0, 1, 0])
        np.testing.assert_array_equal(w[3], [0, 0, 0, 1])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 16), st.floats(0.15, 1.0), st.integers(0, 10_000))
    def test_doubly_stochastic_symmetric_supported(self, P, p, seed):
        t = build_graph("erdos_renyi", P, p=p, seed=seed)
        w = metropolis_weights(t).weights
        assert np.array_equal(w, w.T)
        np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
        off = ~np.eye(P, dtype=bool)
        assert np.array_equal((w != 0) & off, t.adjacency())

    def test_csv_export(self, tmp_path):
        w = metropolis_weights(build_graph("ring", 5))
        w.to_csv(tmp_path / "w.csv")
        np.testing.assert_array_equal(np.loadtxt(tmp_path / "w.csv", delimiter=","), w.weights)


class TestSpectralGap:
    def test_complete_rank_one(self):
        assert spectral_gap(metropolis_weights(build_graph("complete", 4))) == pytest.approx(0.0, abs=1e-12)

    def test_ring4(self):
        w = metropolis_weights(build_graph("ring", 4))
        # circulant oracle: eigenvalues (1 + 2 cos(2 pi k / 4)) / 3
        circ = max(abs((1 + 2 * np.cos(2 * np.pi * k / 4)) / 3) for k in range(1, 4))
        assert circ == pytest.approx(1 / 3)
        assert spectral_gap(w) == pytest.approx(dense_rho(w.weights), abs=1e-9)
        assert spectral_gap(w) == pytest.approx(1 / 3, abs=1e-9)

    def test_disconnected_is_one(self):
        block = np.full((2, 2), 0.5)
        w = np.block([[block, np.zeros((2, 2))], [np.zeros((2, 2)), block]])
        assert spectral_gap(w) == pytest.approx(1.0, abs=1e-9)

    def test_matches_dense_and_reachability(self):
        rng = np.random.default_rng(7)
        for trial in range(50):
            P = int(rng.integers(3, 12))
            edges = [(i, j) for i in range(P) for j in range(i + 1, P) if rng.random() < 0.3]
            t = make_topology(P, edges, require_connected=False)
            w = metropolis_weights(t, allow_disconnected=True)
            g = nx.Graph()
            g.add_nodes_from(range(P))
            g.add_edges_from(edges)
            rho = spectral_gap(w)
            assert rho == pytest.approx(dense_rho(w.weights), abs=1e-8)
            assert (rho < 1 - 1e-9) == nx.is_connected(g)

    def test_cached_property(self):
        w = metropolis_weights(build_graph("ring", 6))
        assert isinstance(w, MixingMatrix)
        assert w.spectral_rho == pytest.approx(dense_rho(w.weights), abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 14), st.integers(0, 10_000))
    def test_contraction_on_zero_mean(self, P, seed):
        w = metropolis_weights(build_graph("erdos_renyi", P, p=0.4, seed=seed))
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(P)
        v -= v.mean()
        assert np.linalg.norm(w.weights @ v) <= w.spectral_rho * np.linalg.norm(v) + 1e-10


class TestActiveTopology:
    def test_full_budget_returns_base(self):
        t = build_graph("erdos_renyi", 8, p=0.35, seed=1)
        assert sample_active_topology(t, 1.0, 0) is t

    def test_half_budget_fraction(self):
        t = build_graph("ring", 4)
        rng = np.random.default_rng(0)
        frac = np.mean([len(sample_active_topology(t, 0.5, rng).edges) / 4 for _ in range(10_000)])
        assert abs(frac - 0.5) <= 0.02

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.05, 0.95))
    def test_whole_matchings_only(self, seed, cb):
        t = build_graph("erdos_renyi", 8, p=0.5, seed=seed % 50)
        active = sample_active_topology(t, cb, seed)
        for m in active.matchings:
            assert m in t.matchings
        assert sorted(e for m in active.matchings for e in m) == list(active.edges)

    def test_budget_range(self):
        with pytest.raises(ValueError):
            sample_active_topology(build_graph("ring", 4), 0.0, 0)
