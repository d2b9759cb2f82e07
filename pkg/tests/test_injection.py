import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metagdn.graph import AttributedGraph
from metagdn.injection import (
    InjectionSpec,
    combined_counts,
    inject_combined,
    inject_contextual,
    inject_structural,
)

from conftest import random_graph


def test_three_cliques_of_fifteen(rng):
    g = random_graph(rng, 100, p=0.02)
    g2, cliques = inject_structural(g, 3, 15, rng)
    members = np.concatenate(cliques)
    assert len(members) == 45 and len(np.unique(members)) == 45
    for q in cliques:
        for a, b in itertools.combinations(q, 2):
            assert g2.has_edge(a, b)
    # no edge removed
    for a, b in g.edge_list():
        assert g2.has_edge(a, b)


def test_clique_of_two_adds_one_edge(rng):
    g = AttributedGraph.from_edges(5, [], np.zeros((5, 1)))
    g2, cliques = inject_structural(g, 1, 2, rng)
    assert g2.num_edges == 1
    assert g2.has_edge(*cliques[0])
    g3, _ = inject_structural(AttributedGraph.from_edges(2, [(0, 1)], np.zeros((2, 1))), 1, 2, rng)
    assert g3.num_edges == 1


def test_structural_too_many(rng):
    with pytest.raises(ValueError):
        inject_structural(random_graph(rng, 20), 2, 15, rng)


def test_contextual_picks_distant_candidate():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [10.0, 0.0]])
    g = AttributedGraph.from_edges(3, [], X)
    g2, targets = inject_contextual(g, 1, 2, np.random.default_rng(0), exclude=[1, 2])
    assert targets.tolist() == [0]
    assert g2.features[0].tolist() == [10.0, 0.0]
    assert g2.edge_list().tolist() == g.edge_list().tolist()


def test_contextual_identical_features_unchanged(rng):
    g = AttributedGraph.from_edges(30, [], np.ones((30, 4)))
    g2, targets = inject_contextual(g, 5, 10, rng)
    assert len(targets) == 5
    assert np.array_equal(g2.features, g.features)


def test_contextual_tie_goes_to_lowest_index():
    X = np.array([[0.0], [5.0], [-5.0], [5.0]])
    g = AttributedGraph.from_edges(4, [], X)
    g2, _ = inject_contextual(g, 1, 3, np.random.default_rng(0), exclude=[1, 2, 3])
    # candidates 1,2,3 all at distance 5 from node 0
    assert g2.features[0, 0] == 5.0


def test_combined_n3000():
    g = AttributedGraph.from_edges(3000, [], np.random.default_rng(0).standard_normal((3000, 4)))
    rep = inject_combined(g, 0.05, InjectionSpec(seed=1))
    assert len(rep.structural_anomalies) == 75
    assert len(rep.contextual_anomalies) == 75
    assert len(rep.cliques) == 5 and all(len(q) == 15 for q in rep.cliques)
    assert len(rep.anomalies) == 150
    assert rep.labels().sum() == 150
    assert np.intersect1d(rep.structural_anomalies, rep.contextual_anomalies).size == 0


def test_combined_rounding_non_multiple():
    assert combined_counts(3000, 0.05, 15) == (5, 75, 75)
    # 0.04 * 2000 / 2 = 40 per type -> 2 cliques (30), contextual 50
    assert combined_counts(2000, 0.04, 15) == (2, 30, 50)
    with pytest.raises(ValueError):
        combined_counts(10, 0.05, 15)


def test_combined_deterministic(rng):
    g = random_graph(rng, 400, p=0.01)
    a = inject_combined(g, 0.1, InjectionSpec(clique_size=5, seed=3))
    b = inject_combined(g, 0.1, InjectionSpec(clique_size=5, seed=3))
    assert np.array_equal(a.anomalies, b.anomalies)
    assert np.array_equal(a.graph.features, b.graph.features)
    assert np.array_equal(a.graph.indices, b.graph.indices)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(60, 300), rate=st.floats(0.05, 0.3), c=st.integers(2, 8))
def test_combined_properties(seed, n, rate, c):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p=0.02)
    k, structural, contextual = combined_counts(n, rate, c)
    rep = inject_combined(g, rate, InjectionSpec(clique_size=c), rng)
    assert len(rep.structural_anomalies) == structural == k * c
    assert len(rep.contextual_anomalies) == contextual
    assert structural + contextual == 2 * int(np.floor(rate * n / 2 + 0.5))
    for q in rep.cliques:
        for a, b in itertools.combinations(q, 2):
            assert rep.graph.has_edge(a, b)
    untouched = np.setdiff1d(np.arange(n), rep.contextual_anomalies)
    assert np.array_equal(rep.graph.features[untouched], g.features[untouched])
