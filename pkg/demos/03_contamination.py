"""
How much do hidden anomalies in the "normal" pool hurt?

Unlabeled nodes are trained as if normal. Here the target's unlabeled pool
is subsampled so that a chosen share of it is actually anomalous, and both
detectors are retrained at each level. Results land in results/contamination.
"""
from metagdn.experiment import ExperimentConfig, run_contamination_study

cfg = ExperimentConfig(repeats=3, seed=2)
rows = run_contamination_study(cfg, [0.0, 0.02, 0.05, 0.1], out_dir="results/contamination")
for r in rows:
    print(f"r_c={r['contamination']:<5} {r['method']:>9} auc_roc {r['auc_roc_mean']:.3f} +- {r['auc_roc_std']:.3f}")
