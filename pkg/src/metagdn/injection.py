"""
Synthetic anomaly injection for attributed graphs.

Structural anomalies are small cliques wired among randomly chosen nodes.
Contextual anomalies copy the attributes of the most distant node among a
random candidate pool. The two sets are kept disjoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InjectionSpec",
    "InjectionReport",
    "inject_structural",
    "inject_contextual",
    "inject_combined",
    "combined_counts",
]


@dataclass(frozen=True)
class InjectionSpec:
    clique_size: int = 15
    num_cliques: int | None = None
    num_contextual: int | None = None
    candidate_pool: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.clique_size < 2:
            raise ValueError("clique_size must be at least 2")
        if self.candidate_pool < 1:
            raise ValueError("candidate_pool must be at least 1")


@dataclass(frozen=True, eq=False)
class InjectionReport:
    structural_anomalies: np.ndarray
    contextual_anomalies: np.ndarray
    graph: object
    cliques: list = field(default_factory=list)

    @property
    def anomalies(self):
        return np.sort(np.concatenate([self.structural_anomalies, self.contextual_anomalies]))

    def label_types(self):
        """``{node: "structural" | "contextual"}``."""
        types = {int(i): "structural" for i in self.structural_anomalies}
        types.update({int(i): "contextual" for i in self.contextual_anomalies})
        return types

    def labels(self):
        y = np.zeros(self.graph.num_nodes, dtype=np.int64)
        y[self.anomalies] = 1
        return y


def inject_structural(graph, num_cliques, c, rng, exclude=()):
    """Wire ``num_cliques`` cliques of ``c`` distinct nodes each.

    Members are drawn without replacement across cliques and never from
    ``exclude``. Returns ``(perturbed_graph, cliques)`` where ``cliques`` is a
    list of node arrays; existing edges are never removed.
    """
    pool = np.setdiff1d(np.arange(graph.num_nodes), np.asarray(exclude, dtype=np.int64))
    need = num_cliques * c
    if need > len(pool):
        raise ValueError(f"cannot place {num_cliques} cliques of {c} among {len(pool)} nodes")
    chosen = rng.choice(pool, size=need, replace=False)
    cliques = [np.sort(chosen[k * c:(k + 1) * c]) for k in range(num_cliques)]
    iu = np.triu_indices(c, k=1)
    new_edges = [np.stack([q[iu[0]], q[iu[1]]], axis=1) for q in cliques]
    if new_edges:
        graph = graph.with_edges(np.concatenate(new_edges))
    return graph, cliques


def inject_contextual(graph, count, pool, rng, exclude=()):
    """Replace attributes of ``count`` nodes by those of a distant node.

    For each target ``i`` (never in ``exclude``, never picked twice), ``pool``
    other nodes are sampled and ``x_i`` is overwritten by the candidate ``x_j``
    with the largest Euclidean distance to ``x_i``; ties go to the lowest
    node index. Targets are processed in the order drawn, on the current
    attributes. The adjacency is not touched.
    """
    n = graph.num_nodes
    allowed = np.setdiff1d(np.arange(n), np.asarray(exclude, dtype=np.int64))
    if count > len(allowed) or pool > n - 1:
        raise ValueError(f"cannot inject {count} contextual anomalies with pool {pool} into {n} nodes")
    targets = rng.choice(allowed, size=count, replace=False)
    X = np.array(graph.features, copy=True)
    for i in targets:
        others = rng.choice(n - 1, size=pool, replace=False)
        cand = np.sort(others + (others >= i))
        dist = np.linalg.norm(X[cand] - X[i], axis=1)
        j = cand[int(np.argmax(dist))]
        X[i] = X[j]
    return graph.with_features(X), np.sort(targets)


def combined_counts(n, rate, c):
    """``(num_cliques, num_structural, num_contextual)`` for a target rate.

    Each type gets ``round(rate * n / 2)``; structural is floored to whole
    cliques and contextual takes the remainder, keeping the total.
    """
    if not 0 < rate < 1:
        raise ValueError("rate must lie in (0, 1)")
    if rate * n < 2:
        raise ValueError(f"rate {rate} on {n} nodes injects fewer than 2 anomalies")
    per_type = int(np.floor(rate * n / 2 + 0.5))
    num_cliques = per_type // c
    structural = num_cliques * c
    contextual = 2 * per_type - structural
    return num_cliques, structural, contextual


def inject_combined(graph, target_rate=0.05, spec=None, rng=None):
    """Inject structural and contextual anomalies of (nearly) equal number,
    totalling about ``target_rate`` of the nodes.

    ``spec.num_cliques`` / ``spec.num_contextual`` override the computed
    counts when set.
    """
    spec = InjectionSpec() if spec is None else spec
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    c = spec.clique_size
    num_cliques, _, contextual = combined_counts(graph.num_nodes, target_rate, c)
    if spec.num_cliques is not None:
        num_cliques = spec.num_cliques
    if spec.num_contextual is not None:
        contextual = spec.num_contextual
    if num_cliques * c + contextual > graph.num_nodes:
        raise ValueError("requested anomalies exceed the number of nodes")
    g, cliques = inject_structural(graph, num_cliques, c, rng)
    structural = np.sort(np.concatenate(cliques)) if cliques else np.zeros(0, dtype=np.int64)
    g, contextual_nodes = inject_contextual(g, contextual, spec.candidate_pool, rng, exclude=structural)
    assert np.intersect1d(structural, contextual_nodes).size == 0
    return InjectionReport(structural, contextual_nodes, g, cliques)
