"""
Graph bundles on disk, network partitioning, target splits, few-shot label
selection, contamination control and a stochastic-block-model generator.

Bundle layout (one directory)::

    edges.tsv     "u<TAB>v" per line, 0-based, each unordered pair once
    features.csv  n rows of d comma-separated reals, row i = node i
    labels.csv    "node_id,1" per ground-truth anomaly, optionally
                  followed by ",structural" or ",contextual"
    meta.json     {"n": ..., "d": ..., "name": ...}
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import AttributedGraph, canonical_edges

__all__ = [
    "BundleError",
    "Bundle",
    "SplitSpec",
    "ShotSpec",
    "Partition",
    "save_bundle",
    "load_bundle",
    "partition_network",
    "largest_remainder",
    "split_target",
    "select_shots",
    "set_contamination",
    "generate_synthetic",
    "block_means",
]

log = logging.getLogger(__name__)


class BundleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Bundle:
    graph: AttributedGraph
    anomalies: np.ndarray
    name: str = "graph"
    label_types: dict = field(default_factory=dict)
    warnings: int = 0

    def labels(self):
        y = np.zeros(self.graph.num_nodes, dtype=np.int64)
        y[self.anomalies] = 1
        return y


def save_bundle(path, graph, anomalies=(), name="graph", label_types=None):
    os.makedirs(path, exist_ok=True)
    label_types = label_types or {}
    with open(os.path.join(path, "edges.tsv"), "w") as fh:
        for u, v in graph.edge_list():
            fh.write(f"{u}\t{v}\n")
    with open(os.path.join(path, "features.csv"), "w") as fh:
        for row in graph.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(os.path.join(path, "labels.csv"), "w") as fh:
        for i in sorted(int(a) for a in anomalies):
            tag = label_types.get(i)
            fh.write(f"{i},1,{tag}\n" if tag else f"{i},1\n")
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump({"n": graph.num_nodes, "d": graph.num_features, "name": name}, fh, indent=2)
        fh.write("\n")


def _lines(path):
    if not os.path.exists(path):
        raise BundleError(f"missing file {path}")
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield lineno, line


def load_bundle(path):
    """Read and validate a bundle.

    Duplicate pairs and self-loops in ``edges.tsv`` are dropped and counted
    in ``Bundle.warnings``. Any other inconsistency raises
    :class:`BundleError` naming the file and line.
    """
    meta_path = os.path.join(path, "meta.json")
    if not os.path.exists(meta_path):
        raise BundleError(f"missing file {meta_path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    try:
        n, d = int(meta["n"]), int(meta["d"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"{meta_path}: needs integer keys n and d") from exc
    name = meta.get("name", os.path.basename(os.path.normpath(path)))

    feat_path = os.path.join(path, "features.csv")
    rows = []
    for lineno, line in _lines(feat_path):
        try:
            row = [float(x) for x in line.split(",")]
        except ValueError as exc:
            raise BundleError(f"{feat_path}:{lineno}: cannot parse {line[:40]!r}") from exc
        if len(row) != d:
            raise BundleError(f"{feat_path}:{lineno}: expected {d} values, found {len(row)}")
        if not all(np.isfinite(row)):
            raise BundleError(f"{feat_path}:{lineno}: non-finite feature value")
        rows.append(row)
    if len(rows) != n:
        raise BundleError(f"{feat_path}: expected {n} rows, found {len(rows)}")
    X = np.array(rows, dtype=np.float64).reshape(n, d)

    edge_path = os.path.join(path, "edges.tsv")
    edges = []
    for lineno, line in _lines(edge_path):
        parts = line.split("\t")
        try:
            u, v = (int(p) for p in parts)
        except ValueError as exc:
            raise BundleError(f"{edge_path}:{lineno}: expected two integer ids, got {line!r}") from exc
        if not (0 <= u < n and 0 <= v < n):
            raise BundleError(f"{edge_path}:{lineno}: node id out of range [0, {n})")
        edges.append((u, v))
    pairs, dupes, loops = canonical_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2))
    if dupes or loops:
        log.warning("%s: dropped %d duplicate edges and %d self-loops", edge_path, dupes, loops)
    graph = AttributedGraph.from_edges(n, pairs, X)

    label_path = os.path.join(path, "labels.csv")
    anomalies, types = [], {}
    for lineno, line in _lines(label_path):
        parts = line.split(",")
        try:
            node, flag = int(parts[0]), int(parts[1])
        except (ValueError, IndexError) as exc:
            raise BundleError(f"{label_path}:{lineno}: expected 'node_id,1', got {line!r}") from exc
        if not 0 <= node < n:
            raise BundleError(f"{label_path}:{lineno}: node id {node} out of range [0, {n})")
        if flag != 1 or len(parts) > 3:
            raise BundleError(f"{label_path}:{lineno}: malformed label line {line!r}")
        anomalies.append(node)
        if len(parts) == 3:
            types[node] = parts[2]
    return Bundle(graph, np.unique(np.array(anomalies, dtype=np.int64)), name, types, dupes + loops)


@dataclass(frozen=True, eq=False)
class Partition:
    """Sub-network with dense ids; ``graph.node_ids`` maps back to the
    parent's ids."""

    graph: AttributedGraph
    anomalies: np.ndarray


def partition_network(graph, parts, rng, anomalies=()):
    """Split nodes uniformly at random into ``parts`` groups of near-equal
    size and keep only the edges internal to each group."""
    if parts < 2:
        raise ValueError("need at least 2 parts")
    if graph.num_nodes < parts:
        raise ValueError(f"cannot split {graph.num_nodes} nodes into {parts} parts")
    anomalies = np.asarray(anomalies, dtype=np.int64)
    out = []
    for group in np.array_split(rng.permutation(graph.num_nodes), parts):
        nodes = np.sort(group)
        sub = graph.subgraph(nodes)
        local = np.flatnonzero(np.isin(nodes, anomalies))
        out.append(Partition(sub, local))
    return out


@dataclass(frozen=True)
class SplitSpec:
    fine_tune_fraction: float = 0.4
    validation_fraction: float = 0.2
    test_fraction: float = 0.4
    seed: int = 0

    def __post_init__(self):
        fr = self.fractions
        if min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("split fractions must be positive and sum to 1")

    @property
    def fractions(self):
        return (self.fine_tune_fraction, self.validation_fraction, self.test_fraction)


def largest_remainder(total, fractions):
    """Integer sizes summing to ``total``; leftover units go to the largest
    fractional parts, earlier entries first on ties."""
    raw = [total * f for f in fractions]
    sizes = [int(np.floor(r)) for r in raw]
    rema = [r - s for r, s in zip(raw, sizes)]
    for k in sorted(range(len(raw)), key=lambda i: (-rema[i], i))[: total - sum(sizes)]:
        sizes[k] += 1
    return sizes


def split_target(nodes, spec, rng):
    """Random disjoint ``(fine_tune, validation, test)`` cover of ``nodes``
    (an int count or an array of node ids)."""
    nodes = np.arange(nodes) if np.isscalar(nodes) else np.asarray(nodes, dtype=np.int64)
    sizes = largest_remainder(len(nodes), spec.fractions)
    if min(sizes) == 0:
        raise ValueError(f"{len(nodes)} nodes leave an empty split")
    perm = rng.permutation(nodes)
    a, b = sizes[0], sizes[0] + sizes[1]
    return np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:])


@dataclass(frozen=True)
class ShotSpec:
    shots: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be at least 1")


def select_shots(pool, anomalies, spec, rng):
    """Pick ``spec.shots`` labeled anomalies from ``pool``.

    Returns ``(labeled, unlabeled, contamination)``: the rest of ``pool`` is
    unlabeled and ``contamination`` is the share of true anomalies in it.
    The labeled set is a prefix of a random permutation, so for one seed a
    larger shot count extends a smaller one.
    """
    pool = np.asarray(pool, dtype=np.int64)
    candidates = np.intersect1d(pool, np.asarray(anomalies, dtype=np.int64))
    if spec.shots > len(candidates):
        raise ValueError(f"{spec.shots} shots requested but only {len(candidates)} anomalies available")
    labeled = np.sort(rng.permutation(candidates)[: spec.shots])
    unlabeled = np.setdiff1d(pool, labeled)
    contamination = (len(candidates) - spec.shots) / len(unlabeled) if len(unlabeled) else 0.0
    return labeled, unlabeled, contamination


def set_contamination(task, r_c, rng):
    """Subsample ``task.unlabeled`` so true anomalies make up ``r_c`` of it.

    Only removes nodes: anomalies when lowering the ratio, normal nodes when
    raising it. Needs ``task.anomalies``.
    """
    if task.anomalies is None:
        raise ValueError(f"{task.name}: ground-truth anomalies unknown")
    if not 0 <= r_c < 1:
        raise ValueError(f"contamination {r_c} outside [0, 1)")
    unl = task.unlabeled
    is_anom = np.isin(unl, task.anomalies)
    anom, normal = unl[is_anom], unl[~is_anom]
    a, m = len(anom), len(normal)
    keep_a, keep_m = a, m
    if a + m and not np.isclose(a / (a + m), r_c):
        if r_c < a / (a + m):
            keep_a = int(np.floor(r_c * m / (1 - r_c) + 0.5))
        else:
            keep_m = int(np.floor(a * (1 - r_c) / r_c + 0.5))
    if keep_m == 0 or (r_c > 0 and a == 0):
        raise ValueError(f"{task.name}: contamination {r_c} unreachable from {a} anomalies / {m} normals")
    if (keep_a, keep_m) == (a, m):
        return task
    kept = np.concatenate([
        rng.choice(anom, size=keep_a, replace=False),
        rng.choice(normal, size=keep_m, replace=False),
    ])
    if len(kept) < len(task.labeled):
        raise ValueError(f"{task.name}: contamination {r_c} leaves too few unlabeled nodes")
    return replace(task, unlabeled=np.sort(kept))


def block_means(blocks, d, feature_shift):
    """Block ``b`` is centred on ``feature_shift / sqrt(2)`` along axis
    ``b mod d`` (sign flipped every ``d`` blocks), so distinct blocks are
    ``feature_shift`` apart whenever ``blocks <= d``. The means do not depend
    on the seed; graphs generated with equal settings share a domain."""
    means = np.zeros((blocks, d))
    for b in range(blocks):
        means[b, b % d] = feature_shift / np.sqrt(2.0) * (-1.0) ** (b // d)
    return means


def generate_synthetic(n, d, blocks, intra_p, inter_p, feature_shift, rng):
    """Stochastic block model with Gaussian node attributes.

    Nodes are split into ``blocks`` contiguous groups of near-equal size.
    Each pair is linked independently with ``intra_p`` inside a block and
    ``inter_p`` across blocks; attributes are ``N(block_mean, I)``.
    """
    if not (0 <= intra_p <= 1 and 0 <= inter_p <= 1):
        raise ValueError("edge probabilities must lie in [0, 1]")
    if blocks < 1:
        raise ValueError("blocks must be at least 1")
    sizes = largest_remainder(n, [1.0 / blocks] * blocks)
    membership = np.repeat(np.arange(blocks), sizes)
    edges = []
    for i in range(n - 1):
        cols = np.arange(i + 1, n)
        p = np.where(membership[cols] == membership[i], intra_p, inter_p)
        hit = cols[rng.random(len(cols)) < p]
        edges.append(np.stack([np.full(len(hit), i), hit], axis=1))
    edges = np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.int64)
    X = block_means(blocks, d, feature_shift)[membership] + rng.standard_normal((n, d))
    return AttributedGraph.from_edges(n, edges, X)
