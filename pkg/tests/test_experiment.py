import json

import numpy as np
import pytest

from metagdn.data import save_bundle
from metagdn.experiment import (
    ExperimentConfig,
    Setting,
    StageError,
    SyntheticSpec,
    config_hash,
    plan,
    prepare_run,
    run_contamination_study,
    run_experiment,
    run_settings,
    settings_for,
    target_task,
)
from metagdn.injection import InjectionSpec
from metagdn.meta import MetaConfig


def tiny(**kw):
    base = dict(
        synthetic=SyntheticSpec(n=400, d=8, blocks=2, intra_p=0.03, inter_p=0.001, feature_shift=6.0),
        meta=MetaConfig(epochs=5, fine_tune_epochs=5, encoder_dim=4, valuator_dim=8),
        injection=InjectionSpec(clique_size=5),
        injection_rate=0.1,
        num_aux=2,
        repeats=2,
        ks=(5, 10),
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_round_trip(tmp_path):
    cfg = tiny()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    again = ExperimentConfig.load(path)
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)
    assert config_hash(tiny(seed=1)) != config_hash(cfg)


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(num_aux=0)
    with pytest.raises(ValueError):
        ExperimentConfig(synthetic=None)
    with pytest.raises(ValueError):
        ExperimentConfig(synthetic=None, target_bundle=str(tmp_path / "missing"))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})


def test_prepare_run_structure():
    cfg = tiny()
    run = prepare_run(cfg, 0)
    assert len(run.aux) == 2
    fine, val, test = run.splits
    assert len(fine) + len(val) + len(test) == 400
    counts = run.split_counts()
    assert counts["test"] > 0 and counts["fine_tune"] >= 10
    for t in run.aux:
        assert len(t.labeled) == cfg.aux_shots
    task = target_task(cfg, run, 10, 2)
    assert set(task.labeled) <= set(run.target_anomalies) & set(fine)
    assert set(task.unlabeled) | set(task.labeled) == set(fine)


def test_shot_sets_nested_across_settings():
    cfg = tiny()
    run = prepare_run(cfg, 0)
    prev = set()
    for k in (1, 3, 5, 10):
        lab = set(target_task(cfg, run, k, 2).labeled.tolist())
        assert prev <= lab and len(lab) == k
        prev = lab


def test_run_experiment_outputs(tmp_path):
    cfg = tiny()
    rows = run_experiment(cfg, "compare", tmp_path)
    assert [r["method"] for r in rows] == ["gdn", "meta_gdn", "random"]
    for r in rows:
        assert r["config_hash"] == config_hash(cfg)
        assert 0 <= r["auc_roc_mean"] <= 1
        assert len(r["runs"]) == 2
        assert set(r["runs"][0]["split_anomalies"]) == {"fine_tune", "validation", "test"}
        assert set(r["precision_at_k"]) == {"5", "10"}
    saved = json.loads((tmp_path / "results.json").read_text())
    assert saved == json.loads(json.dumps(rows))
    lines = (tmp_path / "scores.csv").read_text().splitlines()
    assert lines[0] == "setting,method,repeat,node_id,score"
    test_size = len(prepare_run(cfg, 0).splits[2])
    assert len(lines) == 1 + 3 * 2 * test_size
    assert (tmp_path / "train_log.jsonl").stat().st_size > 0


def test_shots_sweep_one_row_per_setting():
    names = [s.name for s in settings_for("shots", tiny())]
    assert names == ["shots=1", "shots=3", "shots=5", "shots=10"]
    rows = run_settings(tiny(repeats=1), settings_for("shots", tiny()), write=False)
    assert [r["shots"] for r in rows] == [1, 3, 5, 10]


def test_aux_sweep_and_ablation_modes():
    assert [s.num_aux for s in settings_for("aux", tiny())] == [1, 2, 3, 4, 5, 6]
    assert settings_for("ablation", tiny())[0].methods == ("gdn_minus", "gdn", "meta_gdn")
    with pytest.raises(ValueError):
        settings_for("nope", tiny())


def test_contamination_natural_level_matches_plain_run():
    cfg = tiny(repeats=1)
    run = prepare_run(cfg, 0)
    natural = target_task(cfg, run, 10, 2).contamination
    plain = run_settings(cfg, [Setting("x", ("gdn",))], write=False)
    study = run_contamination_study(cfg, [natural], ("gdn",), write=False)
    assert study[0]["auc_roc_mean"] == plain[0]["auc_roc_mean"]


def test_contamination_skips_unreachable(caplog):
    cfg = tiny(repeats=1)
    rows = run_contamination_study(cfg, [0.0, 0.02, 0.999], ("gdn",), write=False)
    assert [r["contamination"] for r in rows] == [0.0, 0.02]
    assert "skipping contamination 0.999" in caplog.text


def test_bundle_sources(tmp_path):
    from metagdn.data import generate_synthetic
    paths = []
    for i in range(3):
        g = generate_synthetic(300, 6, 2, 0.03, 0.001, 5.0, np.random.default_rng(i))
        p = tmp_path / f"net{i}"
        save_bundle(p, g)
        paths.append(str(p))
    cfg = tiny(synthetic=None, target_bundle=paths[0], aux_bundles=tuple(paths[1:]), repeats=1)
    rows = run_experiment(cfg, "compare", write=False)
    assert len(rows) == 3
    big = generate_synthetic(900, 6, 2, 0.01, 0.001, 5.0, np.random.default_rng(9))
    save_bundle(tmp_path / "src", big)
    cfg = tiny(synthetic=None, source_bundle=str(tmp_path / "src"), repeats=1)
    assert len(run_experiment(cfg, "ablation", write=False)) == 3


def test_stage_tagged_failure():
    cfg = tiny(synthetic=SyntheticSpec(n=40, d=4), injection_rate=0.05)
    with pytest.raises(StageError, match=r"\[prepare repeat 0\]"):
        run_experiment(cfg, write=False)


def test_plan_lists_stages():
    lines = plan(tiny(), settings_for("shots", tiny()))
    assert any("shots=10" in line for line in lines)
    assert lines[0].startswith("config_hash")
