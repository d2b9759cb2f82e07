import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metagdn.graph import (
    AttributedGraph,
    canonical_edges,
    normalize_adjacency,
    propagate,
    spmm,
)

from conftest import random_graph


def dense_normalized(graph):
    A = graph.adjacency().toarray() + np.eye(graph.num_nodes)
    dinv = 1.0 / np.sqrt(A.sum(axis=1))
    return dinv[:, None] * A * dinv[None, :]


def test_single_node_is_identity():
    g = AttributedGraph.from_edges(1, [], np.zeros((1, 2)))
    assert normalize_adjacency(g).to_dense().tolist() == [[1.0]]


def test_two_node_edge():
    g = AttributedGraph.from_edges(2, [(0, 1)], np.zeros((2, 1)))
    np.testing.assert_allclose(normalize_adjacency(g).to_dense(), [[0.5, 0.5], [0.5, 0.5]], rtol=0, atol=1e-15)


def test_star_weights():
    g = AttributedGraph.from_edges(3, [(0, 1), (0, 2)], np.zeros((3, 1)))
    S = normalize_adjacency(g).to_dense()
    assert S[0, 0] == 1 / 3
    assert S[1, 1] == S[2, 2] == 0.5
    assert S[0, 1] == pytest.approx(1 / np.sqrt(6), rel=1e-15)
    assert S[0, 2] == pytest.approx(1 / np.sqrt(6), rel=1e-15)
    assert S[1, 2] == 0.0


def test_diagonal_is_inverse_degree_plus_one(rng):
    g = random_graph(rng, 30)
    S = normalize_adjacency(g).to_dense()
    assert np.array_equal(np.diag(S), 1.0 / (g.degrees() + 1.0))


def test_normalized_matches_dense_formula(rng):
    g = random_graph(rng, 25, p=0.3)
    np.testing.assert_allclose(normalize_adjacency(g).to_dense(), dense_normalized(g), rtol=1e-14)


def test_isolated_node_keeps_self_loop():
    g = AttributedGraph.from_edges(3, [(0, 1)], np.zeros((3, 1)))
    S = normalize_adjacency(g).to_dense()
    assert S[2].tolist() == [0.0, 0.0, 1.0]


def test_canonical_edges_counts():
    pairs, dupes, loops = canonical_edges(4, [(0, 1), (1, 0), (2, 2), (3, 1), (1, 3)])
    assert pairs.tolist() == [[0, 1], [1, 3]]
    assert (dupes, loops) == (2, 1)


def test_graph_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        AttributedGraph(np.array([0, 1, 1]), np.array([1]), np.zeros((2, 1)))


def test_graph_rejects_self_loop_and_nonfinite():
    with pytest.raises(ValueError, match="self-loop"):
        AttributedGraph(np.array([0, 1]), np.array([0]), np.zeros((1, 1)))
    with pytest.raises(ValueError, match="non-finite"):
        AttributedGraph.from_edges(2, [(0, 1)], np.array([[np.nan], [0.0]]))


def test_graph_is_read_only(rng):
    g = random_graph(rng, 5)
    with pytest.raises(ValueError):
        g.features[0, 0] = 1.0


def test_subgraph_keeps_internal_edges():
    g = AttributedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)], np.arange(8.0).reshape(4, 2))
    sub = g.subgraph([1, 2, 3])
    assert sub.edge_list().tolist() == [[0, 1], [1, 2]]
    assert sub.node_ids.tolist() == [1, 2, 3]
    assert np.array_equal(sub.features, g.features[1:])


def test_propagate_zero_steps_copies(rng):
    g = random_graph(rng, 10)
    out = propagate(normalize_adjacency(g), g.features, 0)
    assert np.array_equal(out.values, g.features)
    assert out.values is not g.features
    assert out.degree == 0


def test_propagate_single_node_fixed_point():
    g = AttributedGraph.from_edges(1, [], np.array([[2.0, -1.0]]))
    out = propagate(normalize_adjacency(g), g.features, 5)
    assert out.values.tolist() == [[2.0, -1.0]]


def test_propagate_two_nodes_one_step():
    g = AttributedGraph.from_edges(2, [(0, 1)], np.array([[1.0], [0.0]]))
    out = propagate(normalize_adjacency(g), g.features, 1)
    np.testing.assert_allclose(out.values, [[0.5], [0.5]], atol=1e-15)


def test_propagate_shape_errors(rng):
    g = random_graph(rng, 4)
    S = normalize_adjacency(g)
    with pytest.raises(ValueError):
        propagate(S, np.zeros((3, 2)), 1)
    with pytest.raises(ValueError):
        propagate(S, g.features, -1)


def test_propagate_leaves_input_untouched(rng):
    g = random_graph(rng, 8)
    X = rng.standard_normal((8, 2))
    before = X.copy()
    propagate(normalize_adjacency(g), X, 3)
    assert np.array_equal(X, before)


def test_spmm_small_cases():
    g = AttributedGraph.from_edges(1, [], np.zeros((1, 1)))
    M = np.array([[3.0, -4.0, 5.5]])
    assert np.array_equal(spmm(normalize_adjacency(g), M), M)
    g2 = AttributedGraph.from_edges(2, [(0, 1)], np.zeros((2, 1)))
    np.testing.assert_allclose(spmm(normalize_adjacency(g2), np.eye(2)), [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_spmm_dense_oracle_10x10(rng):
    g = random_graph(rng, 10, p=0.4)
    S = normalize_adjacency(g)
    M = rng.standard_normal((10, 10))
    np.testing.assert_allclose(spmm(S, M), S.to_dense() @ M, rtol=0, atol=1e-12)


def test_spmm_shape_error(rng):
    S = normalize_adjacency(random_graph(rng, 5))
    with pytest.raises(ValueError):
        spmm(S, np.zeros((4, 2)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 50), p=st.floats(0.0, 0.5))
def test_spmm_matches_brute_force(seed, n, p):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p)
    S = normalize_adjacency(g)
    M = rng.standard_normal((n, 4))
    Sd = S.to_dense()
    brute = np.array([[sum(Sd[i, k] * M[k, j] for k in range(n)) for j in range(4)] for i in range(n)])
    np.testing.assert_allclose(spmm(S, M), brute, rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 100), k1=st.integers(0, 5), k2=st.integers(0, 5))
def test_propagate_composes(seed, n, k1, k2):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, 0.1)
    S = normalize_adjacency(g)
    once = propagate(S, g.features, k1 + k2).values
    twice = propagate(S, propagate(S, g.features, k1).values, k2).values
    np.testing.assert_allclose(once, twice, rtol=0, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 60))
def test_normalized_symmetric_and_positive(seed, n):
    rng = np.random.default_rng(seed)
    S = normalize_adjacency(random_graph(rng, n, 0.2)).to_scipy()
    assert (S != S.T).nnz == 0
    assert np.all(S.data > 0) and np.all(np.isfinite(S.data))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 60), K=st.integers(0, 10))
def test_propagate_bounded(seed, n, K):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, 0.2)
    out = propagate(normalize_adjacency(g), g.features, K).values
    assert np.all(np.isfinite(out))
    assert np.abs(out).max() <= np.abs(g.features).max() * n
