"""
GDN scoring network: a linear encoder over propagated features followed by
a one-hidden-layer ReLU valuator.

    z_i = x_i W_e + b_e
    o_i = relu(z_i W_h + b_h)
    s_i = o_i . u + c

Parameters are immutable value objects so the meta-learner can hold the
shared initialization and several task-adapted copies at once.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from .graph import PropagatedFeatures

__all__ = [
    "PARAM_FIELDS",
    "GdnParams",
    "GdnGradients",
    "ScoreBatch",
    "init_params",
    "forward",
    "score_all",
    "backward",
    "forward_backward",
    "apply_gradient_step",
    "save_params",
    "load_params",
]

PARAM_FIELDS = (
    "encoder_weight",
    "encoder_bias",
    "hidden_weight",
    "hidden_bias",
    "output_weight",
    "output_bias",
)


def _ro(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class _ParamSet:
    encoder_weight: np.ndarray
    encoder_bias: np.ndarray
    hidden_weight: np.ndarray
    hidden_bias: np.ndarray
    output_weight: np.ndarray
    output_bias: np.ndarray

    def __post_init__(self):
        for f in PARAM_FIELDS:
            object.__setattr__(self, f, _ro(getattr(self, f)))
        d, h_e = self.encoder_weight.shape
        h_v = self.hidden_weight.shape[1]
        expected = {
            "encoder_bias": (h_e,),
            "hidden_weight": (h_e, h_v),
            "hidden_bias": (h_v,),
            "output_weight": (h_v,),
            "output_bias": (),
        }
        for f, shape in expected.items():
            if getattr(self, f).shape != shape:
                raise ValueError(f"{f} has shape {getattr(self, f).shape}, expected {shape}")
        if not all(np.all(np.isfinite(a)) for a in self.arrays()):
            raise ValueError("parameters contain non-finite values")

    @classmethod
    def _trusted(cls, *arrays):
        # fresh arrays from internal arithmetic: skip the copy and checks
        obj = object.__new__(cls)
        for f, a in zip(PARAM_FIELDS, arrays):
            a = np.asarray(a, dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(obj, f, a)
        return obj

    def arrays(self):
        return (self.encoder_weight, self.encoder_bias, self.hidden_weight,
                self.hidden_bias, self.output_weight, self.output_bias)

    @property
    def dims(self):
        """``(d, h_e, h_v)``."""
        d, h_e = self.encoder_weight.shape
        return d, h_e, self.hidden_weight.shape[1]

    def flatten(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def unflatten(cls, vector, dims):
        d, h_e, h_v = dims
        shapes = [(d, h_e), (h_e,), (h_e, h_v), (h_v,), (h_v,), ()]
        out, pos = [], 0
        for shape in shapes:
            size = int(np.prod(shape))
            out.append(np.asarray(vector[pos:pos + size]).reshape(shape))
            pos += size
        return cls(*out)

    def __add__(self, other):
        return type(self)._trusted(*(a + b for a, b in zip(self.arrays(), other.arrays())))

    def scale(self, factor):
        return type(self)._trusted(*(factor * a for a in self.arrays()))

    def allclose(self, other, **kw):
        return all(np.allclose(a, b, **kw) for a, b in zip(self.arrays(), other.arrays()))

    def equals(self, other):
        """Bitwise equality of every array."""
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


class GdnParams(_ParamSet):
    """Trainable weights of the encoder and the abnormality valuator."""


class GdnGradients(_ParamSet):
    """Gradients with the same layout as :class:`GdnParams`."""

    @classmethod
    def zeros_like(cls, params):
        return cls(*(np.zeros_like(a) for a in params.arrays()))


@dataclass(frozen=True, eq=False)
class ScoreBatch:
    node_indices: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.scores)


def init_params(d, h_e, h_v, rng):
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` weights, zero biases."""
    if min(d, h_e, h_v) < 1:
        raise ValueError("dimensions must be positive")

    def uniform(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return GdnParams(
        encoder_weight=uniform(d, (d, h_e)),
        encoder_bias=np.zeros(h_e),
        hidden_weight=uniform(h_e, (h_e, h_v)),
        hidden_bias=np.zeros(h_v),
        output_weight=uniform(h_v, (h_v,)),
        output_bias=0.0,
    )


def _features(feats):
    return feats.values if isinstance(feats, PropagatedFeatures) else np.asarray(feats, dtype=np.float64)


def _gather(params, feats, batch):
    X = _features(feats)
    idx = np.asarray(batch, dtype=np.int64).ravel()
    if len(idx) and (idx.min() < 0 or idx.max() >= X.shape[0]):
        raise IndexError(f"node index out of range [0, {X.shape[0]})")
    if X.shape[1] != params.encoder_weight.shape[0]:
        raise ValueError(f"feature width {X.shape[1]} does not match encoder input {params.encoder_weight.shape[0]}")
    return idx, X[idx]


def _hidden(params, x):
    z = x @ params.encoder_weight + params.encoder_bias
    pre = z @ params.hidden_weight + params.hidden_bias
    return z, pre, np.maximum(pre, 0.0)


def forward(params, feats, batch):
    """Anomaly scores for the nodes in ``batch``."""
    idx, x = _gather(params, feats, batch)
    _, _, o = _hidden(params, x)
    s = o @ params.output_weight + params.output_bias
    return ScoreBatch(idx, s)


def score_all(params, feats):
    """Scores for every node of ``feats``."""
    n = _features(feats).shape[0]
    return forward(params, feats, np.arange(n)).scores


def backward(params, feats, batch, dloss_dscore):
    """Gradient of ``sum_i dloss_dscore[i] * s_i`` w.r.t. every parameter.

    The ReLU derivative at exactly zero is taken as zero.
    """
    idx, x = _gather(params, feats, batch)
    return _backward(params, x, _hidden(params, x), dloss_dscore)


def forward_backward(params, feats, batch, loss_fn):
    """Scores, loss and parameter gradients in one pass.

    ``loss_fn(scores) -> (loss, dloss_dscore)``.
    """
    idx, x = _gather(params, feats, batch)
    cache = _hidden(params, x)
    s = cache[2] @ params.output_weight + params.output_bias
    loss, dscore = loss_fn(s)
    return ScoreBatch(idx, s), loss, _backward(params, x, cache, dscore)


def _backward(params, x, cache, dloss_dscore):
    z, pre, o = cache
    g = np.asarray(dloss_dscore, dtype=np.float64).ravel()
    if g.shape != (x.shape[0],):
        raise ValueError(f"dloss_dscore has {g.size} entries for a batch of {x.shape[0]}")
    d_out_w = o.T @ g
    d_out_b = g.sum()
    d_pre = np.outer(g, params.output_weight) * (pre > 0.0)
    d_hid_w = z.T @ d_pre
    d_hid_b = d_pre.sum(axis=0)
    d_z = d_pre @ params.hidden_weight.T
    d_enc_w = x.T @ d_z
    d_enc_b = d_z.sum(axis=0)
    return GdnGradients._trusted(d_enc_w, d_enc_b, d_hid_w, d_hid_b, d_out_w, d_out_b)


def apply_gradient_step(params, grads, lr):
    """``params - lr * grads`` as a new value."""
    if len(params.arrays()) != len(grads.arrays()) or any(
        p.shape != g.shape for p, g in zip(params.arrays(), grads.arrays())
    ):
        raise ValueError("gradients do not match parameter shapes")
    return GdnParams._trusted(*(p - lr * g for p, g in zip(params.arrays(), grads.arrays())))


def save_params(path, params, degree):
    """Write a JSON checkpoint. Floats are stored by ``repr`` so the round
    trip is bit-exact."""
    d, h_e, h_v = params.dims
    doc = {
        "format": "metagdn-params",
        "version": 1,
        "d": d,
        "h_e": h_e,
        "h_v": h_v,
        "degree": int(degree),
        "fields": {
            f: {"shape": list(a.shape), "values": a.ravel().tolist()}
            for f, a in zip(PARAM_FIELDS, params.arrays())
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_params(path):
    """Read a checkpoint written by :func:`save_params`.

    Returns ``(params, degree)``.
    """
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "metagdn-params":
        raise ValueError(f"{path}: not a metagdn parameter checkpoint")
    arrays = []
    for f in PARAM_FIELDS:
        entry = doc["fields"][f]
        arrays.append(np.array(entry["values"], dtype=np.float64).reshape(entry["shape"]))
    params = GdnParams(*arrays)
    if params.dims != (doc["d"], doc["h_e"], doc["h_v"]):
        raise ValueError(f"{path}: recorded dimensions disagree with stored arrays")
    return params, int(doc["degree"])


# keep dataclass field order in sync with PARAM_FIELDS
assert tuple(f.name for f in fields(_ParamSet)) == PARAM_FIELDS
