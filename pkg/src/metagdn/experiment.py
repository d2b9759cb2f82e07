"""
Experiment orchestration: build the auxiliary and target networks, train
GDN / Meta-GDN and variants, score the target test split and aggregate over
repeated seeds.

A run works on ``num_aux + 1`` networks. Network 0 is the target, networks
``1..num_aux`` are auxiliaries, so sweeps over the number of auxiliaries
share the target.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .data import (
    ShotSpec,
    SplitSpec,
    generate_synthetic,
    load_bundle,
    partition_network,
    select_shots,
    set_contamination,
    split_target,
)
from .graph import normalize_adjacency, propagate
from .injection import InjectionSpec, inject_combined
from .loss import LossConfig
from .meta import MetaConfig, Task, fine_tune, stream, train_meta, train_single
from .metrics import DEFAULT_KS, evaluate, random_baseline
from .model import score_all

__all__ = [
    "SyntheticSpec",
    "ExperimentConfig",
    "Setting",
    "METHODS",
    "SHOT_BATCH_SIZES",
    "config_hash",
    "prepare_run",
    "run_settings",
    "run_experiment",
    "run_contamination_study",
    "plan",
    "StageError",
]

log = logging.getLogger(__name__)

METHODS = ("gdn_minus", "gdn", "meta_gdn", "random")
# batch sizes per shot count that avoid duplicated anomalies in a batch
SHOT_BATCH_SIZES = {1: 2, 3: 4, 5: 8, 10: 16}

# stream ids below the run seed
_DATA, _INJECT, _SPLIT, _SHOTS, _CONTAM, _RANDOM, _PART = range(10, 17)
_MAX_SPLIT_ATTEMPTS = 20


class StageError(RuntimeError):
    """A pipeline failure tagged with the stage it happened in."""

    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


@contextmanager
def _stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 2000
    d: int = 32
    blocks: int = 4
    intra_p: float = 0.01
    inter_p: float = 0.0001
    feature_shift: float = 10.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment's results.

    Data comes from exactly one of: ``synthetic``; ``target_bundle`` plus
    ``aux_bundles``; or ``source_bundle`` partitioned into ``num_aux + 1``
    sub-networks. Networks without labels get anomalies injected.
    """

    synthetic: SyntheticSpec | None = field(default_factory=SyntheticSpec)
    target_bundle: str | None = None
    aux_bundles: tuple = ()
    source_bundle: str | None = None
    num_aux: int = 4
    meta: MetaConfig = field(default_factory=MetaConfig)
    injection: InjectionSpec = field(default_factory=InjectionSpec)
    injection_rate: float = 0.05
    split: SplitSpec = field(default_factory=SplitSpec)
    shots: ShotSpec = field(default_factory=ShotSpec)
    aux_shots: int = 10
    degree: int = 2
    ks: tuple = DEFAULT_KS
    output_dir: str = "results"
    seed: int = 0
    repeats: int = 5

    def __post_init__(self):
        sources = [self.synthetic is not None, self.target_bundle is not None, self.source_bundle is not None]
        if sum(sources) != 1:
            raise ValueError("configure exactly one of synthetic, target_bundle, source_bundle")
        if self.num_aux < 1:
            raise ValueError("num_aux must be at least 1")
        if self.target_bundle is not None and len(self.aux_bundles) < self.num_aux:
            raise ValueError(f"{len(self.aux_bundles)} auxiliary bundles for num_aux={self.num_aux}")
        for p in (self.target_bundle, self.source_bundle, *self.aux_bundles):
            if p is not None and not os.path.isdir(p):
                raise ValueError(f"bundle directory {p} does not exist")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if doc.get("synthetic") is not None:
            doc["synthetic"] = SyntheticSpec(**doc["synthetic"])
        if "meta" in doc:
            meta = dict(doc["meta"])
            loss = dict(meta.pop("loss", {}) or {})
            loss.pop("reference", None)
            doc["meta"] = MetaConfig(loss=LossConfig(**loss), **meta)
        for key, typ in (("injection", InjectionSpec), ("split", SplitSpec), ("shots", ShotSpec)):
            if key in doc:
                doc[key] = typ(**doc[key])
        for key in ("aux_bundles", "ks"):
            if key in doc:
                doc[key] = tuple(doc[key])
        if any(k in doc for k in ("target_bundle", "source_bundle")) and "synthetic" not in doc:
            doc["synthetic"] = None
        return cls(**doc)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def config_hash(cfg):
    text = json.dumps(cfg.to_dict(), sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Setting:
    """One results row group: a name plus the knobs a sweep varies."""

    name: str
    methods: tuple = ("gdn", "meta_gdn")
    shots: int | None = None
    num_aux: int | None = None
    contamination: float | None = None


def _run_seed(cfg, repeat):
    return int(stream(cfg.seed, 99, repeat).integers(2**31 - 1))


def _labels(n, anomalies):
    y = np.zeros(n, dtype=np.int64)
    y[np.asarray(anomalies, dtype=np.int64)] = 1
    return y


def _networks(cfg, run_seed, count):
    """``count`` (graph, anomalies) pairs; index 0 is the target."""
    nets = []
    if cfg.synthetic is not None:
        s = cfg.synthetic
        for i in range(count):
            g = generate_synthetic(s.n, s.d, s.blocks, s.intra_p, s.inter_p, s.feature_shift,
                                   stream(run_seed, _DATA, i))
            nets.append((g, np.zeros(0, dtype=np.int64)))
    elif cfg.target_bundle is not None:
        for p in (cfg.target_bundle, *cfg.aux_bundles[: count - 1]):
            b = load_bundle(p)
            nets.append((b.graph, b.anomalies))
    else:
        b = load_bundle(cfg.source_bundle)
        parts = partition_network(b.graph, count, stream(run_seed, _PART), b.anomalies)
        nets = [(p.graph, p.anomalies) for p in parts]
    out = []
    for i, (g, anomalies) in enumerate(nets):
        if len(anomalies) == 0:
            rep = inject_combined(g, cfg.injection_rate, cfg.injection, stream(run_seed, _INJECT, i))
            g, anomalies = rep.graph, rep.anomalies
        out.append((g, anomalies))
    return out


@dataclass
class RunData:
    repeat: int
    run_seed: int
    target_graph: object
    target_anomalies: np.ndarray
    splits: tuple
    aux: list
    propagated: dict = field(default_factory=dict)

    def features(self, degree):
        if degree not in self.propagated:
            g = self.target_graph
            self.propagated[degree] = propagate(normalize_adjacency(g), g.features, degree)
        return self.propagated[degree]

    def split_counts(self):
        y = _labels(self.target_graph.num_nodes, self.target_anomalies)
        return {name: int(y[idx].sum()) for name, idx in zip(("fine_tune", "validation", "test"), self.splits)}


def prepare_run(cfg, repeat, max_aux=None):
    """Build the networks, auxiliary tasks and target splits of one repeat.

    Splits leaving the test or fine-tune part without enough anomalies are
    redrawn with the next split stream (logged).
    """
    run_seed = _run_seed(cfg, repeat)
    max_aux = cfg.num_aux if max_aux is None else max_aux
    nets = _networks(cfg, run_seed, max_aux + 1)
    target_graph, target_anoms = nets[0]
    y = _labels(target_graph.num_nodes, target_anoms)
    for attempt in range(_MAX_SPLIT_ATTEMPTS):
        splits = split_target(target_graph.num_nodes, cfg.split, stream(run_seed, _SPLIT, attempt))
        fine, val, test = splits
        if y[test].sum() > 0 and 0 < y[val].sum() < len(val) and y[fine].sum() >= max(cfg.shots.shots, 10):
            break
        log.warning("repeat %d: degenerate split on attempt %d, redrawing", repeat, attempt)
    else:
        raise RuntimeError("could not draw a split with anomalies in every part")
    aux = []
    for i, (g, anoms) in enumerate(nets[1:], start=1):
        P = propagate(normalize_adjacency(g), g.features, cfg.degree)
        lab, unl, _ = select_shots(np.arange(g.num_nodes), anoms, ShotSpec(cfg.aux_shots), stream(run_seed, _SHOTS, i))
        aux.append(Task(g, P, lab, unl, name=f"aux{i}", anomalies=anoms))
    return RunData(repeat, run_seed, target_graph, target_anoms, splits, aux)


def target_task(cfg, run, shots, degree, contamination=None):
    fine, val, _ = run.splits
    y = _labels(run.target_graph.num_nodes, run.target_anomalies)
    lab, unl, _ = select_shots(fine, run.target_anomalies, ShotSpec(shots), stream(run.run_seed, _SHOTS, 0))
    task = Task(run.target_graph, run.features(degree), lab, unl, name="target",
                validation=(val, y[val]), anomalies=run.target_anomalies)
    if contamination is not None:
        task = set_contamination(task, contamination, stream(run.run_seed, _CONTAM))
    return task


def _method_scores(method, cfg, run, setting, meta_cache, on_log):
    shots = setting.shots or cfg.shots.shots
    mcfg = replace(cfg.meta, seed=run.run_seed, batch_size=SHOT_BATCH_SIZES.get(shots, cfg.meta.batch_size))
    test = run.splits[2]
    if method == "random":
        return stream(run.run_seed, _RANDOM).random(len(test))
    degree = 0 if method == "gdn_minus" else cfg.degree
    task = target_task(cfg, run, shots, degree, setting.contamination)
    if method in ("gdn", "gdn_minus"):
        params = train_single(task, mcfg, on_log)
    elif method == "meta_gdn":
        num_aux = setting.num_aux or cfg.num_aux
        key = (run.repeat, num_aux)
        if key not in meta_cache:
            aux_cfg = replace(cfg.meta, seed=run.run_seed)
            meta_cache[key] = train_meta(run.aux[:num_aux], aux_cfg, on_log)
        params = fine_tune(meta_cache[key], task, mcfg, on_log)
    else:
        raise ValueError(f"unknown method {method!r}")
    return score_all(params, task.propagated)[test]


def _aggregate(values):
    arr = np.array(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def run_settings(cfg, settings, out_dir=None, write=True):
    """Run every setting for every repeat; returns the list of result rows.

    Writes ``results.json``, ``scores.csv`` (setting, method, repeat,
    node_id, score) and ``train_log.jsonl`` into ``out_dir`` when ``write``.
    """
    out_dir = cfg.output_dir if out_dir is None else out_dir
    if write:
        os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(cfg)
    max_aux = max([s.num_aux or cfg.num_aux for s in settings] + [cfg.num_aux])
    per = {(s.name, m): {"metrics": [], "runs": [], "time": 0.0} for s in settings for m in s.methods}
    score_rows = []
    log_fh = open(os.path.join(out_dir, "train_log.jsonl"), "w") if write else None
    try:
        for repeat in range(cfg.repeats):
            with _stage(f"prepare repeat {repeat}"):
                run = prepare_run(cfg, repeat, max_aux)
            meta_cache = {}
            y_test = _labels(run.target_graph.num_nodes, run.target_anomalies)[run.splits[2]]
            for s in settings:
                for method in s.methods:
                    t0 = time.perf_counter()

                    def on_log(rec, _s=s.name, _m=method):
                        if log_fh is not None:
                            log_fh.write(json.dumps({"setting": _s, "method": _m, "repeat": repeat, **rec}) + "\n")

                    with _stage(f"{s.name}/{method} repeat {repeat}"):
                        scores = _method_scores(method, cfg, run, s, meta_cache, on_log)
                        report = evaluate(scores, y_test, cfg.ks, node_indices=run.splits[2])
                    entry = per[(s.name, method)]
                    entry["time"] += time.perf_counter() - t0
                    entry["metrics"].append(report)
                    entry["runs"].append({
                        "repeat": repeat,
                        "seed": run.run_seed,
                        "split_anomalies": run.split_counts(),
                        "auc_roc": report.auc_roc,
                        "auc_pr": report.auc_pr,
                    })
                    score_rows.extend((s.name, method, repeat, int(i), float(v)) for i, v in zip(run.splits[2], scores))
                    log.info("%s %s repeat %d: auc_roc=%.4f", s.name, method, repeat, report.auc_roc)
    finally:
        if log_fh is not None:
            log_fh.close()

    rows = []
    for s in settings:
        for method in s.methods:
            entry = per[(s.name, method)]
            reps = entry["metrics"]
            roc_m, roc_s = _aggregate([r.auc_roc for r in reps])
            pr_m, pr_s = _aggregate([r.auc_pr for r in reps])
            ks = sorted(set.intersection(*(set(r.precision_at_k) for r in reps)))
            rows.append({
                "config_hash": chash,
                "seed": cfg.seed,
                "setting": s.name,
                "method": method,
                "shots": s.shots or cfg.shots.shots,
                "num_aux": s.num_aux or cfg.num_aux,
                "contamination": s.contamination,
                "auc_roc_mean": roc_m,
                "auc_roc_std": roc_s,
                "auc_pr_mean": pr_m,
                "auc_pr_std": pr_s,
                "precision_at_k": {str(k): float(np.mean([r.precision_at_k[k] for r in reps])) for k in ks},
                "runs": entry["runs"],
                "runtime_seconds": entry["time"],
            })
    if write:
        with open(os.path.join(out_dir, "results.json"), "w") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
        with open(os.path.join(out_dir, "scores.csv"), "w") as fh:
            fh.write("setting,method,repeat,node_id,score\n")
            for r in score_rows:
                fh.write(f"{r[0]},{r[1]},{r[2]},{r[3]},{r[4]!r}\n")
    return rows


def settings_for(mode, cfg):
    if mode == "compare":
        return [Setting("compare", ("gdn", "meta_gdn", "random"))]
    if mode == "shots":
        return [Setting(f"shots={k}", ("meta_gdn",), shots=k) for k in (1, 3, 5, 10)]
    if mode == "aux":
        return [Setting(f"num_aux={p}", ("meta_gdn",), num_aux=p) for p in range(1, 7)]
    if mode == "ablation":
        return [Setting("ablation", ("gdn_minus", "gdn", "meta_gdn"))]
    raise ValueError(f"unknown experiment mode {mode!r}")


def plan(cfg, settings):
    """Human-readable list of planned stages (nothing is run)."""
    lines = [f"config_hash {config_hash(cfg)}", f"repeats {cfg.repeats} (master seed {cfg.seed})"]
    src = "synthetic" if cfg.synthetic is not None else (cfg.source_bundle or cfg.target_bundle)
    lines.append(f"data: {src}; inject rate {cfg.injection_rate} where unlabeled")
    lines.append(f"split {cfg.split.fractions}; target shots {cfg.shots.shots}; aux shots {cfg.aux_shots}")
    for s in settings:
        lines.append(f"setting {s.name}: methods {', '.join(s.methods)}"
                     + (f"; shots {s.shots}" if s.shots else "")
                     + (f"; num_aux {s.num_aux}" if s.num_aux else "")
                     + (f"; contamination {s.contamination}" if s.contamination is not None else ""))
    return lines


def run_experiment(cfg, mode="compare", out_dir=None, write=True):
    return run_settings(cfg, settings_for(mode, cfg), out_dir, write)


def run_contamination_study(cfg, levels, methods=("gdn", "meta_gdn"), out_dir=None, write=True):
    """One row per (level, method); unreachable levels are skipped with a
    warning."""
    settings = []
    probe = prepare_run(cfg, 0)
    for level in levels:
        try:
            target_task(cfg, probe, cfg.shots.shots, cfg.degree, level)
        except ValueError as exc:
            log.warning("skipping contamination %s: %s", level, exc)
            continue
        settings.append(Setting(f"contamination={level}", tuple(methods), contamination=level))
    return run_settings(cfg, settings, out_dir, write)


def random_reference(labels, seed, repeats=100, ks=DEFAULT_KS):
    return random_baseline(labels, stream(seed, _RANDOM), repeats, ks)
