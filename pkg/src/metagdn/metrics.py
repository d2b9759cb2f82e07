"""
Ranking metrics for anomaly scores: AUC-ROC, AUC-PR (average precision)
and Precision@K, plus a random-score baseline.

Rankings are stable: descending score, ties broken by ascending node index.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "DEFAULT_KS",
    "MetricsReport",
    "auc_roc",
    "auc_pr",
    "precision_at_k",
    "ranking",
    "evaluate",
    "random_baseline",
    "write_scores",
    "read_scores",
]

DEFAULT_KS = (25, 50, 100)


@dataclass
class MetricsReport:
    auc_roc: float
    auc_pr: float
    precision_at_k: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "auc_roc": self.auc_roc,
            "auc_pr": self.auc_pr,
            "precision_at_k": {str(k): v for k, v in self.precision_at_k.items()},
        }


def _prepare(scores, labels, node_indices=None):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    idx = np.arange(len(s)) if node_indices is None else np.asarray(node_indices).ravel()
    if idx.shape != s.shape:
        raise ValueError("node_indices must align with scores")
    return s, y.astype(np.int64), idx


def ranking(scores, node_indices=None):
    """Positions sorted by descending score, then ascending node index."""
    s = np.asarray(scores, dtype=np.float64)
    idx = np.arange(len(s)) if node_indices is None else np.asarray(node_indices)
    return np.lexsort((idx, -s))


def auc_roc(scores, labels):
    """Mann-Whitney estimate of P(score of anomaly > score of normal);
    ties count one half."""
    s, y, _ = _prepare(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC-ROC needs at least one positive and one negative")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pr(scores, labels, node_indices=None):
    """Average precision over the descending-score sweep.

    Accumulated in exact rational arithmetic and rounded once, so the value
    does not depend on summation order.
    """
    s, y, idx = _prepare(scores, labels, node_indices)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("AUC-PR needs at least one positive")
    hits = y[ranking(s, idx)]
    ranks = np.flatnonzero(hits) + 1
    total = sum(Fraction(h, int(r)) for h, r in zip(range(1, n_pos + 1), ranks))
    return float(total / n_pos)


def precision_at_k(scores, labels, k, node_indices=None):
    s, y, idx = _prepare(scores, labels, node_indices)
    if not 1 <= k <= len(s):
        raise ValueError(f"K={k} outside [1, {len(s)}]")
    top = ranking(s, idx)[:k]
    return int(y[top].sum()) / k


def evaluate(scores, labels, ks=DEFAULT_KS, node_indices=None):
    """All three metrics; K values larger than the list are skipped."""
    s, y, idx = _prepare(scores, labels, node_indices)
    return MetricsReport(
        auc_roc=auc_roc(s, y),
        auc_pr=auc_pr(s, y, idx),
        precision_at_k={int(k): precision_at_k(s, y, int(k), idx) for k in ks if k <= len(s)},
    )


def random_baseline(labels, rng, repeats=100, ks=DEFAULT_KS):
    """Metrics of uniform random scores, averaged over ``repeats`` draws."""
    y = np.asarray(labels)
    reports = [evaluate(rng.random(len(y)), y, ks) for _ in range(repeats)]
    return MetricsReport(
        auc_roc=float(np.mean([r.auc_roc for r in reports])),
        auc_pr=float(np.mean([r.auc_pr for r in reports])),
        precision_at_k={k: float(np.mean([r.precision_at_k[k] for r in reports])) for k in reports[0].precision_at_k},
    )


def write_scores(path, node_ids, scores):
    """``node_id,score`` lines; scores written with ``repr`` precision."""
    with open(path, "w") as fh:
        fh.write("node_id,score\n")
        for i, s in zip(node_ids, scores):
            fh.write(f"{int(i)},{float(s)!r}\n")


def read_scores(path):
    ids, vals = [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "node_id,score":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                a, b = line.split(",")
                ids.append(int(a))
                vals.append(float(b))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: cannot parse {line!r}") from exc
    return np.array(ids, dtype=np.int64), np.array(vals)


def write_report(path, report, **extra):
    with open(path, "w") as fh:
        json.dump({**extra, **report.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
