"""Few-shot graph anomaly detection with deviation networks and cross-network meta-learning."""
from .data import (
    Bundle,
    BundleError,
    ShotSpec,
    SplitSpec,
    generate_synthetic,
    load_bundle,
    partition_network,
    save_bundle,
    select_shots,
    set_contamination,
    split_target,
)
from .graph import AttributedGraph, normalize_adjacency, propagate, spmm
from .injection import InjectionSpec, inject_combined, inject_contextual, inject_structural
from .loss import LossConfig, deviation, loss_and_grad, sample_reference
from .meta import MetaConfig, Task, fine_tune, train_meta, train_single
from .metrics import MetricsReport, auc_pr, auc_roc, evaluate, precision_at_k
from .model import GdnParams, backward, forward, init_params, load_params, save_params, score_all

__version__ = "0.1.0"
