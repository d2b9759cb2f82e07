"""
Training loops: per-network GDN training, cross-network meta-learning of a
shared initialization, and fine-tuning on the target network.

Randomness is organized in named streams derived from the master seed so
that, e.g., the meta-update batches of task ``i`` do not depend on how many
inner steps were taken.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .loss import LossConfig, loss_and_grad
from .metrics import auc_roc
from .model import (
    GdnParams,
    apply_gradient_step,
    forward,
    forward_backward,
    init_params,
    save_params,
)

__all__ = [
    "Task",
    "MetaConfig",
    "TrainState",
    "TrainingDivergedError",
    "stream",
    "sample_batch",
    "batch_loss_grad",
    "inner_adapt",
    "init_state",
    "meta_epoch",
    "train_meta",
    "fine_tune",
    "train_single",
]

# stream ids for np.random.default_rng([seed, *ids])
INIT, REFERENCE, INNER, OUTER, FINETUNE = range(5)


def stream(seed, *ids):
    return np.random.default_rng([int(seed), *ids])


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class Task:
    """Few-shot detection task on one network.

    ``labeled`` are the known anomalies, ``unlabeled`` the nodes treated as
    normal during training. ``validation`` optionally holds
    ``(node_indices, labels)`` for checkpoint selection and ``anomalies`` the
    ground-truth anomaly set (metadata only, never used for training).
    """

    graph: object
    propagated: object
    labeled: np.ndarray
    unlabeled: np.ndarray
    name: str = "task"
    validation: tuple | None = None
    anomalies: np.ndarray | None = None

    def __post_init__(self):
        lab = np.unique(np.asarray(self.labeled, dtype=np.int64))
        unl = np.unique(np.asarray(self.unlabeled, dtype=np.int64))
        if len(lab) != len(self.labeled) or len(unl) != len(self.unlabeled):
            raise ValueError(f"{self.name}: node sets contain repeats")
        n = self.propagated.shape[0]
        if len(lab) < 1:
            raise ValueError(f"{self.name}: at least one labeled anomaly is required")
        if len(lab) > len(unl):
            raise ValueError(f"{self.name}: more labeled anomalies than unlabeled nodes")
        if np.intersect1d(lab, unl).size:
            raise ValueError(f"{self.name}: labeled and unlabeled sets overlap")
        if max(lab.max(), unl.max(initial=-1)) >= n or min(lab.min(), unl.min(initial=0)) < 0:
            raise ValueError(f"{self.name}: node index out of range")
        object.__setattr__(self, "labeled", lab)
        object.__setattr__(self, "unlabeled", unl)
        if self.anomalies is not None:
            object.__setattr__(self, "anomalies", np.unique(np.asarray(self.anomalies, dtype=np.int64)))

    @property
    def contamination(self):
        """Share of true anomalies inside ``unlabeled`` (None if unknown)."""
        if self.anomalies is None:
            return None
        return float(np.isin(self.unlabeled, self.anomalies).mean())


@dataclass(frozen=True)
class MetaConfig:
    inner_lr: float = 0.01
    meta_lr: float = 0.001
    inner_steps: int = 5
    epochs: int = 1000
    batch_size: int = 16
    fine_tune_epochs: int = 100
    encoder_dim: int = 64
    valuator_dim: int = 512
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0

    def __post_init__(self):
        if not (self.inner_lr >= 0 and self.meta_lr > 0):
            raise ValueError("learning rates must be positive")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError("batch_size must be a positive even number")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be at least 1")

    def resolved_loss(self):
        """Loss config with its reference sampled once from the seed."""
        return self.loss.resolve(stream(self.seed, REFERENCE))


@dataclass
class TrainState:
    params: GdnParams
    epoch: int = 0
    streams: list = field(default_factory=list)
    loss_history: list = field(default_factory=list)


def sample_batch(task, b, rng):
    """``b/2`` unlabeled nodes (label 0) followed by ``b/2`` labeled anomalies
    (label 1). Anomalies are drawn with replacement only when fewer than
    ``b/2`` are available."""
    if b < 2 or b % 2:
        raise ValueError("batch size must be a positive even number")
    half = b // 2
    if len(task.unlabeled) < half:
        raise ValueError(f"{task.name}: {len(task.unlabeled)} unlabeled nodes cannot fill half a batch of {b}")
    normal = rng.choice(task.unlabeled, size=half, replace=False)
    abnormal = rng.choice(task.labeled, size=half, replace=len(task.labeled) < half)
    nodes = np.concatenate([normal, abnormal])
    labels = np.repeat(np.array([0, 1]), half)
    return nodes, labels


def batch_loss_grad(params, task, nodes, labels, loss_cfg):
    _, loss, grads = forward_backward(
        params, task.propagated, nodes, lambda s: loss_and_grad(s, labels, loss_cfg)
    )
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"{task.name}: non-finite loss")
    return loss, grads


def inner_adapt(params, task, cfg, rng, loss_cfg=None):
    """``inner_steps`` plain gradient steps at rate ``inner_lr``, each on a
    fresh batch. Returns new parameters; ``params`` is untouched."""
    loss_cfg = cfg.resolved_loss() if loss_cfg is None else loss_cfg
    adapted = params
    for _ in range(cfg.inner_steps):
        nodes, labels = sample_batch(task, cfg.batch_size, rng)
        _, grads = batch_loss_grad(adapted, task, nodes, labels, loss_cfg)
        adapted = apply_gradient_step(adapted, grads, cfg.inner_lr)
    return adapted


def init_state(params, num_tasks, seed):
    streams = [(stream(seed, INNER, i), stream(seed, OUTER, i)) for i in range(num_tasks)]
    return TrainState(params=params, streams=streams)


def meta_epoch(state, tasks, cfg, loss_cfg=None, on_log=None):
    """One pass over the auxiliary tasks followed by a first-order meta-update.

    For each task the shared parameters are adapted with :func:`inner_adapt`;
    the loss gradient on a fresh batch is then taken at the adapted
    parameters and the sum over tasks is applied to the shared parameters at
    rate ``meta_lr``.
    """
    if not tasks:
        raise ValueError("meta_epoch needs at least one task")
    if len(state.streams) != len(tasks):
        raise ValueError(f"{len(state.streams)} rng streams for {len(tasks)} tasks")
    loss_cfg = cfg.resolved_loss() if loss_cfg is None else loss_cfg
    theta = state.params
    total = None
    task_losses = []
    for task, (inner_rng, outer_rng) in zip(tasks, state.streams):
        adapted = inner_adapt(theta, task, cfg, inner_rng, loss_cfg)
        nodes, labels = sample_batch(task, cfg.batch_size, outer_rng)
        loss, grads = batch_loss_grad(adapted, task, nodes, labels, loss_cfg)
        task_losses.append(loss)
        total = grads if total is None else total + grads
    meta_loss = float(np.mean(task_losses))
    if not np.isfinite(meta_loss):
        raise TrainingDivergedError(f"meta-loss diverged at epoch {state.epoch}")
    if on_log is not None:
        on_log({"epoch": state.epoch, "task_losses": task_losses, "meta_loss": meta_loss})
    return TrainState(
        params=apply_gradient_step(theta, total, cfg.meta_lr),
        epoch=state.epoch + 1,
        streams=state.streams,
        loss_history=state.loss_history + [meta_loss],
    )


def _initial(task_or_dim, cfg):
    return init_params(task_or_dim, cfg.encoder_dim, cfg.valuator_dim, stream(cfg.seed, INIT))


def train_meta(aux_tasks, cfg, on_log=None, checkpoint_every=0, checkpoint_path=None, return_state=False):
    """Learn a transferable initialization from the auxiliary tasks.

    Runs ``cfg.epochs`` meta-epochs starting from a seeded initialization.
    With ``checkpoint_every > 0`` parameters are written to
    ``checkpoint_path.format(epoch=...)`` at that interval.
    """
    if not aux_tasks:
        raise ValueError("train_meta needs at least one auxiliary task")
    d = aux_tasks[0].propagated.shape[1]
    loss_cfg = cfg.resolved_loss()
    state = init_state(_initial(d, cfg), len(aux_tasks), cfg.seed)
    degree = getattr(aux_tasks[0].propagated, "degree", 0)
    for _ in range(cfg.epochs):
        state = meta_epoch(state, aux_tasks, cfg, loss_cfg, on_log)
        if checkpoint_every and state.epoch % checkpoint_every == 0:
            save_params(checkpoint_path.format(epoch=state.epoch), state.params, degree)
    return state if return_state else state.params


def validation_auc(params, task):
    nodes, labels = task.validation
    return auc_roc(forward(params, task.propagated, nodes).scores, labels)


def _descend(params, task, cfg, epochs, lr, rng, loss_cfg, on_log=None, tag="train"):
    """Plain batched gradient descent, one batch per epoch.

    When the task has a validation split the parameters with the best
    validation AUC-ROC (including the starting point) are returned.
    """
    best, best_auc = params, None
    if task.validation is not None:
        best_auc = validation_auc(params, task)
    for epoch in range(epochs):
        nodes, labels = sample_batch(task, cfg.batch_size, rng)
        loss, grads = batch_loss_grad(params, task, nodes, labels, loss_cfg)
        params = apply_gradient_step(params, grads, lr)
        record = {"stage": tag, "epoch": epoch, "loss": loss}
        if task.validation is not None:
            auc = validation_auc(params, task)
            record["val_auc"] = auc
            if auc > best_auc:
                best, best_auc = params, auc
        if on_log is not None:
            on_log(record)
    return best if task.validation is not None else params


def fine_tune(params, target, cfg, on_log=None):
    """Adapt ``params`` to the target task for ``fine_tune_epochs`` steps at
    rate ``inner_lr``."""
    return _descend(
        params, target, cfg, cfg.fine_tune_epochs, cfg.inner_lr,
        stream(cfg.seed, FINETUNE), cfg.resolved_loss(), on_log, "fine_tune",
    )


def train_single(task, cfg, on_log=None):
    """GDN on one network: ``epochs`` batched steps at rate ``inner_lr`` from
    the seeded initialization.

    Batches come from the same stream that task 0's meta-update batches use,
    so with ``inner_lr = 0`` and one task :func:`train_meta` reproduces this
    function run at rate ``meta_lr`` exactly.
    """
    params = _initial(task.propagated.shape[1], cfg)
    return _descend(
        params, task, cfg, cfg.epochs, cfg.inner_lr,
        stream(cfg.seed, OUTER, 0), cfg.resolved_loss(), on_log, "train",
    )
