"""
Deviation loss against a Gaussian reference score.

A set of ``k`` scores drawn from ``N(mu, sigma^2)`` fixes a reference mean
and spread. Each node's score is standardized against them and the loss
pulls normal nodes to the reference while pushing labeled anomalies at
least ``margin`` standard deviations above it.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import ScoreBatch

__all__ = [
    "ReferenceDistribution",
    "LossConfig",
    "sample_reference",
    "deviation",
    "loss_and_grad",
]


@dataclass(frozen=True)
class ReferenceDistribution:
    prior_mean: float
    prior_std: float
    sample_count: int
    ref_mean: float
    ref_std: float

    def __post_init__(self):
        if not self.prior_std > 0:
            raise ValueError("prior_std must be positive")
        if self.sample_count < 2:
            raise ValueError("sample_count must be at least 2")
        if not self.ref_std > 0:
            raise ValueError("ref_std must be positive")


def sample_reference(mu=0.0, sigma=1.0, k=5000, rng=None):
    """Draw ``k`` prior scores and summarize them.

    ``ref_std`` uses the population convention (divide by ``k``). The draws
    are ``mu + sigma * z`` for standard normal ``z``, so for a fixed seed the
    summary is an affine image of the same underlying sample.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = np.random.default_rng() if rng is None else rng
    draws = mu + sigma * rng.standard_normal(k)
    ref_std = float(draws.std())
    if ref_std == 0.0:
        raise FloatingPointError("sampled reference scores have zero spread")
    return ReferenceDistribution(float(mu), float(sigma), int(k), float(draws.mean()), ref_std)


@dataclass(frozen=True)
class LossConfig:
    """Margin plus the reference distribution.

    ``reference`` may be left unset; :meth:`resolve` samples it from the
    prior settings with the given generator.
    """

    margin: float = 5.0
    reference: ReferenceDistribution | None = None
    prior_mean: float = 0.0
    prior_std: float = 1.0
    sample_count: int = 5000

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("margin must be positive")

    def resolve(self, rng):
        if self.reference is not None:
            return self
        ref = sample_reference(self.prior_mean, self.prior_std, self.sample_count, rng)
        return replace(self, reference=ref)


def deviation(s, ref):
    return (s - ref.ref_mean) / ref.ref_std


def loss_and_grad(scores, labels, cfg):
    """Batch-mean deviation loss and its gradient w.r.t. each score.

    Subgradients are zero at ``dev == 0`` for normal nodes and at
    ``dev == margin`` for anomalies.
    """
    if cfg.reference is None:
        raise ValueError("LossConfig has no reference distribution; call resolve() first")
    s = scores.scores if isinstance(scores, ScoreBatch) else np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if y.shape != s.shape:
        raise ValueError(f"{y.size} labels for {s.size} scores")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    ref = cfg.reference
    dev = deviation(s, ref)
    anomalous = y == 1
    per_node = np.where(anomalous, np.maximum(0.0, cfg.margin - dev), np.abs(dev))
    ddev = np.where(anomalous, np.where(dev < cfg.margin, -1.0, 0.0), np.sign(dev))
    b = len(s)
    return float(per_node.mean()), ddev / (ref.ref_std * b)
