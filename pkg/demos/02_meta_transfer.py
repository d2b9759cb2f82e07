"""
Transfer anomaly knowledge from related networks to a target with few labels.

Four auxiliary networks from the same domain each contribute 10 labeled
anomalies. Meta-training learns an initialization that adapts quickly; a
short fine-tune on the target then uses only k labels. We sweep k and
compare with training from scratch.
"""
from metagdn.experiment import ExperimentConfig, Setting, run_settings

cfg = ExperimentConfig(repeats=3, seed=1)
settings = [Setting(f"{k}-shot", ("gdn", "meta_gdn"), shots=k) for k in (1, 3, 5, 10)]
rows = run_settings(cfg, settings, write=False)

print(f"{'setting':>8} {'GDN':>14} {'Meta-GDN':>14}")
by = {(r["setting"], r["method"]): r for r in rows}
for s in settings:
    g, m = by[s.name, "gdn"], by[s.name, "meta_gdn"]
    print(f"{s.name:>8} {g['auc_roc_mean']:.3f} +- {g['auc_roc_std']:.3f} {m['auc_roc_mean']:.3f} +- {m['auc_roc_std']:.3f}")
