"""Command-line entry point: ``metagdn <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` (a JSON experiment config) and
``--seed``; individual flags override values from the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .data import (
    BundleError,
    ShotSpec,
    generate_synthetic,
    load_bundle,
    partition_network,
    save_bundle,
    select_shots,
    split_target,
)
from .experiment import (
    ExperimentConfig,
    StageError,
    config_hash,
    plan,
    run_contamination_study,
    run_experiment,
    settings_for,
)
from .graph import normalize_adjacency, propagate
from .injection import inject_combined
from .meta import Task, fine_tune, stream, train_meta, train_single
from .metrics import evaluate, read_scores, write_report, write_scores
from .model import load_params, save_params, score_all

log = logging.getLogger("metagdn")

# flag dest -> path inside ExperimentConfig.to_dict()
OVERRIDES = {
    "seed": ("seed",),
    "repeats": ("repeats",),
    "num_aux": ("num_aux",),
    "shots": ("shots", "shots"),
    "aux_shots": ("aux_shots",),
    "degree": ("degree",),
    "epochs": ("meta", "epochs"),
    "fine_tune_epochs": ("meta", "fine_tune_epochs"),
    "inner_lr": ("meta", "inner_lr"),
    "meta_lr": ("meta", "meta_lr"),
    "inner_steps": ("meta", "inner_steps"),
    "batch_size": ("meta", "batch_size"),
    "encoder_dim": ("meta", "encoder_dim"),
    "valuator_dim": ("meta", "valuator_dim"),
    "margin": ("meta", "loss", "margin"),
    "injection_rate": ("injection_rate",),
    "clique_size": ("injection", "clique_size"),
    "candidate_pool": ("injection", "candidate_pool"),
    "ks": ("ks",),
    "output_dir": ("output_dir",),
}

# stream ids for the single-network subcommands
_SPLIT, _SHOTS = 12, 13


class UsageError(Exception):
    pass


def resolve_config(args):
    """ExperimentConfig from ``--config`` plus flag overrides."""
    doc = ExperimentConfig.load(args.config).to_dict() if args.config else ExperimentConfig().to_dict()
    for dest, path in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        node = doc
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = value
    return ExperimentConfig.from_dict(doc)


def _meta_cfg(cfg):
    return replace(cfg.meta, seed=cfg.seed)


def _read_split(path):
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return tuple(np.array(doc[k], dtype=np.int64) for k in ("fine_tune", "validation", "test"))
    except KeyError as exc:
        raise UsageError(f"{path}: missing split {exc}") from None


def _target_task(bundle, splits, cfg, shots):
    fine, val, _ = splits
    y = bundle.labels()
    P = propagate(normalize_adjacency(bundle.graph), bundle.graph.features, cfg.degree)
    lab, unl, contamination = select_shots(fine, bundle.anomalies, ShotSpec(shots), stream(cfg.seed, _SHOTS))
    log.info("%s: %d labeled, %d unlabeled, contamination %.4f", bundle.name, len(lab), len(unl), contamination)
    return Task(bundle.graph, P, lab, unl, name=bundle.name, validation=(val, y[val]), anomalies=bundle.anomalies)


def _splits_for(args, bundle, cfg):
    if args.split:
        return _read_split(args.split)
    return split_target(bundle.graph.num_nodes, cfg.split, stream(cfg.seed, _SPLIT))


def cmd_synth(args, cfg):
    s = cfg.synthetic
    if s is None:
        raise UsageError("config has no synthetic section")
    s = replace(s, **{k: v for k, v in (("n", args.n), ("d", args.d), ("blocks", args.blocks),
                                        ("intra_p", args.intra_p), ("inter_p", args.inter_p),
                                        ("feature_shift", args.feature_shift)) if v is not None})
    g = generate_synthetic(s.n, s.d, s.blocks, s.intra_p, s.inter_p, s.feature_shift, np.random.default_rng(cfg.seed))
    save_bundle(args.out, g, name=os.path.basename(os.path.normpath(args.out)))
    print(f"wrote {args.out}: {g.num_nodes} nodes, {g.num_edges} edges, d={g.num_features}")


def cmd_inject(args, cfg):
    b = load_bundle(args.bundle)
    spec = replace(cfg.injection, seed=cfg.seed)
    if args.num_cliques is not None or args.num_contextual is not None:
        spec = replace(spec, num_cliques=args.num_cliques, num_contextual=args.num_contextual)
    rep = inject_combined(b.graph, cfg.injection_rate, spec, np.random.default_rng(cfg.seed))
    save_bundle(args.out, rep.graph, rep.anomalies, b.name, rep.label_types())
    print(f"wrote {args.out}: {len(rep.structural_anomalies)} structural "
          f"({len(rep.cliques)} cliques), {len(rep.contextual_anomalies)} contextual")


def cmd_partition(args, cfg):
    b = load_bundle(args.bundle)
    parts = partition_network(b.graph, args.parts, np.random.default_rng(cfg.seed), b.anomalies)
    os.makedirs(args.out_dir, exist_ok=True)
    mapping = {}
    for k, p in enumerate(parts):
        path = os.path.join(args.out_dir, f"part{k}")
        types = {i: b.label_types[int(p.graph.node_ids[i])] for i in p.anomalies
                 if int(p.graph.node_ids[i]) in b.label_types}
        save_bundle(path, p.graph, p.anomalies, f"{b.name}-part{k}", types)
        mapping[f"part{k}"] = p.graph.node_ids.tolist()
        print(f"wrote {path}: {p.graph.num_nodes} nodes, {p.graph.num_edges} edges, {len(p.anomalies)} anomalies")
    with open(os.path.join(args.out_dir, "mapping.json"), "w") as fh:
        json.dump(mapping, fh)


def cmd_split(args, cfg):
    b = load_bundle(args.bundle)
    splits = split_target(b.graph.num_nodes, cfg.split, stream(cfg.seed, _SPLIT))
    y = b.labels()
    doc = {k: s.tolist() for k, s in zip(("fine_tune", "validation", "test"), splits)}
    doc["anomaly_counts"] = {k: int(y[s].sum()) for k, s in zip(("fine_tune", "validation", "test"), splits)}
    doc["seed"] = cfg.seed
    with open(args.out, "w") as fh:
        json.dump(doc, fh)
    print(f"wrote {args.out}: sizes {[len(s) for s in splits]}, anomalies {list(doc['anomaly_counts'].values())}")


def _logger(path):
    if not path:
        return None, None
    fh = open(path, "w")
    return fh, lambda rec: fh.write(json.dumps(rec) + "\n")


def cmd_train(args, cfg):
    b = load_bundle(args.bundle)
    task = _target_task(b, _splits_for(args, b, cfg), cfg, cfg.shots.shots)
    fh, on_log = _logger(args.log)
    try:
        params = train_single(task, _meta_cfg(cfg), on_log)
    finally:
        if fh:
            fh.close()
    save_params(args.out, params, cfg.degree)
    print(f"wrote {args.out}")


def cmd_meta_train(args, cfg):
    tasks = []
    for i, path in enumerate(args.aux):
        b = load_bundle(path)
        P = propagate(normalize_adjacency(b.graph), b.graph.features, cfg.degree)
        lab, unl, _ = select_shots(np.arange(b.graph.num_nodes), b.anomalies, ShotSpec(cfg.aux_shots),
                                   stream(cfg.seed, _SHOTS, i + 1))
        tasks.append(Task(b.graph, P, lab, unl, name=b.name, anomalies=b.anomalies))
    fh, on_log = _logger(args.log)
    try:
        params = train_meta(tasks, _meta_cfg(cfg), on_log)
    finally:
        if fh:
            fh.close()
    save_params(args.out, params, cfg.degree)
    print(f"wrote {args.out}")


def cmd_fine_tune(args, cfg):
    params, degree = load_params(args.checkpoint)
    cfg = replace(cfg, degree=degree)
    b = load_bundle(args.bundle)
    task = _target_task(b, _splits_for(args, b, cfg), cfg, cfg.shots.shots)
    fh, on_log = _logger(args.log)
    try:
        params = fine_tune(params, task, _meta_cfg(cfg), on_log)
    finally:
        if fh:
            fh.close()
    save_params(args.out, params, degree)
    print(f"wrote {args.out}")


def cmd_score(args, cfg):
    params, degree = load_params(args.checkpoint)
    b = load_bundle(args.bundle)
    if params.dims[0] != b.graph.num_features:
        raise UsageError(f"checkpoint expects d={params.dims[0]}, bundle has d={b.graph.num_features}")
    P = propagate(normalize_adjacency(b.graph), b.graph.features, degree)
    scores = score_all(params, P)
    nodes = np.arange(b.graph.num_nodes)
    if args.split:
        nodes = dict(zip(("fine_tune", "validation", "test"), _read_split(args.split)))[args.part]
    write_scores(args.out, nodes, scores[nodes])
    print(f"wrote {args.out}: {len(nodes)} scores")


def cmd_eval(args, cfg):
    ids, scores = read_scores(args.scores)
    b = load_bundle(args.bundle)
    if len(ids) and (ids.min() < 0 or ids.max() >= b.graph.num_nodes):
        raise UsageError(f"{args.scores}: node ids outside the bundle")
    report = evaluate(scores, b.labels()[ids], cfg.ks, node_indices=ids)
    if args.out:
        write_report(args.out, report, scores=args.scores, bundle=args.bundle)
    print(json.dumps(report.to_dict(), indent=2))


def cmd_experiment(args, cfg):
    settings = settings_for(args.mode, cfg)
    if args.dry_run:
        print(json.dumps(cfg.to_dict(), indent=2, default=str))
        print("\n".join(plan(cfg, settings)))
        return
    rows = run_experiment(cfg, args.mode, cfg.output_dir)
    _summary(rows, cfg)


def cmd_contamination(args, cfg):
    rows = run_contamination_study(cfg, args.levels, tuple(args.methods), cfg.output_dir)
    _summary(rows, cfg)


def _summary(rows, cfg):
    print(f"config {config_hash(cfg)}; results in {cfg.output_dir}")
    for r in rows:
        print(f"{r['setting']:>22} {r['method']:>9}  auc_roc {r['auc_roc_mean']:.4f} +- {r['auc_roc_std']:.4f}"
              f"  auc_pr {r['auc_pr_mean']:.4f} +- {r['auc_pr_std']:.4f}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="count", default=0)
    g = common.add_argument_group("overrides")
    g.add_argument("--repeats", type=int)
    g.add_argument("--num-aux", type=int)
    g.add_argument("--shots", type=int)
    g.add_argument("--aux-shots", type=int)
    g.add_argument("--degree", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--fine-tune-epochs", type=int)
    g.add_argument("--inner-lr", type=float)
    g.add_argument("--meta-lr", type=float)
    g.add_argument("--inner-steps", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--encoder-dim", type=int)
    g.add_argument("--valuator-dim", type=int)
    g.add_argument("--margin", type=float)
    g.add_argument("--injection-rate", type=float)
    g.add_argument("--clique-size", type=int)
    g.add_argument("--candidate-pool", type=int)
    g.add_argument("--ks", type=int, nargs="+")
    g.add_argument("--output-dir")

    parser = argparse.ArgumentParser(prog="metagdn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic SBM bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--intra-p", type=float)
    p.add_argument("--inter-p", type=float)
    p.add_argument("--feature-shift", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inject", parents=[common], help="inject structural and contextual anomalies")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--num-cliques", type=int)
    p.add_argument("--num-contextual", type=int)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("partition", parents=[common], help="split a network into random sub-networks")
    p.add_argument("--bundle", required=True)
    p.add_argument("--parts", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("split", parents=[common], help="fine-tune / validation / test split")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train GDN on one network")
    p.add_argument("--bundle", required=True)
    p.add_argument("--split")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("meta-train", parents=[common], help="meta-train on auxiliary networks")
    p.add_argument("--aux", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.set_defaults(func=cmd_meta_train)

    p = sub.add_parser("fine-tune", parents=[common], help="fine-tune a checkpoint on the target")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--split")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.set_defaults(func=cmd_fine_tune)

    p = sub.add_parser("score", parents=[common], help="score nodes with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--split")
    p.add_argument("--part", choices=("fine_tune", "validation", "test"), default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", parents=[common], help="metrics of a scores file")
    p.add_argument("--scores", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", parents=[common], help="run a study over repeated seeds")
    p.add_argument("--mode", choices=("compare", "shots", "aux", "ablation"), default="compare")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("contamination", parents=[common], help="AUC versus contamination level")
    p.add_argument("--levels", type=float, nargs="+", default=[0.0, 0.01, 0.02, 0.05, 0.1])
    p.add_argument("--methods", nargs="+", choices=("gdn", "meta_gdn", "gdn_minus", "random"),
                   default=["gdn", "meta_gdn"])
    p.set_defaults(func=cmd_contamination)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        parser.error(f"invalid config: {exc}")
    try:
        args.func(args, cfg)
    except UsageError as exc:
        parser.error(str(exc))
    except (BundleError, StageError, ValueError, OSError) as exc:
        print(f"metagdn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
