import json

import numpy as np
import pytest

from beamfuse.cli import main
from beamfuse.dataset import Dataset
from beamfuse.errors import InvalidConfigError
from beamfuse.experiments import (ExperimentPlan, audit_split, budget_for_factor, cross_validate,
                                  default_beam_sets, generate_dataset, pair_policy, read_csv_rows,
                                  run_ablation, sample_seed)
from beamfuse.formats import read_dataset

TINY = {"reps": 3, "n_classes": 2, "folds": 2, "snr_db": 10.0, "beam_angles_deg": [-15.0, 0.0, 15.0, 30.0],
        "model": {"conv_filters": [2], "latent_dim": 4, "lstm_hidden": 4, "heads": 8, "attention_layers": 1},
        "train": {"lr": 1e-3, "max_epochs": 2, "patience": 1, "batch_size": 4},
        "augment_factors": [0, 1]}


@pytest.fixture(scope="module")
def tiny_plan():
    return ExperimentPlan.from_dict(TINY)


@pytest.fixture(scope="module")
def tiny_ds(tiny_plan):
    return generate_dataset(tiny_plan)


def test_plan_validation():
    with pytest.raises(InvalidConfigError):
        ExperimentPlan(beam_angles_deg=(-15.0, 0.0, 15.0, 45.0))
    with pytest.raises(InvalidConfigError):
        ExperimentPlan(beam_angles_deg=(0.0, 15.0))
    with pytest.raises(InvalidConfigError):
        ExperimentPlan(beam_sets=((0.0, 20.0),))
    with pytest.raises(InvalidConfigError):
        ExperimentPlan(folds=1)
    with pytest.raises(InvalidConfigError):
        ExperimentPlan(train={"lr": -1.0})


def test_zero_reps_gives_empty_dataset():
    ds = generate_dataset(ExperimentPlan.from_dict({**TINY, "reps": 0}))
    assert len(ds) == 0 and ds.x.ndim == 5 and ds.x.shape[3] == 4


def test_dataset_shape_and_seeds(tiny_plan, tiny_ds):
    assert tiny_ds.x.shape == (6, 15, 16, 4, 10)
    assert tiny_ds.labels.tolist() == [0, 0, 0, 1, 1, 1]
    assert tiny_ds.seeds[0] == sample_seed(tiny_plan.seed, 0, 0, 0, 0)
    again = generate_dataset(tiny_plan)
    assert np.array_equal(again.x, tiny_ds.x)


def test_leak_audit():
    x = np.zeros((4, 2, 2, 1, 2))
    ds = Dataset(x, [0, 1, 0, 1], (0.0,), 0.04, 0.07)
    audit_split(ds.subset([0, 1]), ds.subset([2]), ds.subset([3]))
    with pytest.raises(InvalidConfigError):
        audit_split(ds.subset([0, 1]), ds.subset([1]), ds.subset([3]))
    # an augmented copy of a test sample in training also counts as a leak
    copy = ds.subset([3])
    copy.sample_ids = np.array([99])
    with pytest.raises(InvalidConfigError):
        audit_split(Dataset.concat([ds.subset([0]), copy]), ds.subset([1]), ds.subset([3]))


def test_cross_validation_folds_are_disjoint(tiny_plan, tiny_ds):
    res = cross_validate(tiny_ds, tiny_plan, beams=(0.0,))
    assert len(res) == 2
    tested = np.concatenate([r.test_ids for r in res])
    assert sorted(tested.tolist()) == list(range(6))
    for r in res:
        assert not set(r.train_ids.tolist()) & set(r.test_ids.tolist())
        assert 0.0 <= r.accuracy <= 1.0


def test_single_value_ablation_equals_plain_run(tiny_plan, tiny_ds):
    out = run_ablation(tiny_ds, tiny_plan, "dropout", [0.5])
    rows = read_csv_rows(out["ablation_dropout_folds.csv"])
    plain = cross_validate(tiny_ds, tiny_plan.with_overrides(model={**tiny_plan.model, "dropout": 0.5}))
    assert len(read_csv_rows(out["ablation_dropout_summary.csv"])) == 1
    assert [float(r["accuracy"]) for r in rows] == pytest.approx([r.accuracy for r in plain], abs=1e-9)
    with pytest.raises(InvalidConfigError):
        run_ablation(tiny_ds, tiny_plan, "width")


def test_beam_sets_and_policy(tiny_plan):
    sets = default_beam_sets(tiny_plan)
    assert sets[:4] == [(-15.0,), (0.0,), (15.0,), (30.0,)]
    assert (0.0, 15.0) in sets and (-15.0, 0.0, 15.0, 30.0) in sets
    assert pair_policy((0.0, 15.0), 0.0) == "adjacent"
    assert pair_policy((0.0, 30.0), 0.0) == "other"


def test_budget_for_factor(tiny_plan):
    cfg = ExperimentPlan().train_config()
    b = budget_for_factor(cfg, 90)
    assert (b.max_epochs, b.patience, b.epoch_samples) == (cfg.max_epochs, cfg.patience, 90)


def _write_plan(tmp_path):
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(TINY))
    return path


def test_cli_usage_error_json(capsys):
    assert main(["nonsense"]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "usage"


def test_cli_config_error_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"folds": 1}))
    assert main(["beampattern", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "invalid-config" and "folds" in err["message"]
    assert main(["eval", "--dataset", str(tmp_path / "missing.bmxd"), "--out", str(tmp_path / "o")]) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "io"


def test_cli_beampattern(tmp_path):
    out = tmp_path / "bp"
    assert main(["beampattern", "--steer", "0", "15", "--grid-step", "1", "--out", str(out)]) == 0
    rows = read_csv_rows((out / "beampattern_15.csv").read_bytes())
    assert len(rows) == 181 and list(rows[0]) == ["angle_deg", "normalized_gain"]
    gains = [float(r["normalized_gain"]) for r in rows]
    assert max(gains) == pytest.approx(1.0)
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {"beampattern_0.csv", "beampattern_15.csv"}


def test_cli_pipeline_and_manifest_rerun(tmp_path):
    plan = _write_plan(tmp_path)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["simulate", "--config", str(plan), "--seed", "3", "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (b / "dataset.bmxd").read_bytes() == (a / "dataset.bmxd").read_bytes()
    assert read_dataset(b / "dataset.bmxd").seeds[0] == sample_seed(3, 0, 0, 0, 0)
    data = str(a / "dataset.bmxd")
    assert main(["train", "--dataset", data, "--config", str(plan), "--out", str(c)]) == 0
    assert main(["eval", "--dataset", data, "--checkpoint", str(c / "checkpoint.bmxc"), "--out", str(c)]) == 0
    assert read_csv_rows((c / "eval.csv").read_bytes())[1]["value"] == "6"


def test_cli_raw_capture_and_process(tmp_path):
    plan = _write_plan(tmp_path)
    out = tmp_path / "raw"
    assert main(["simulate", "--raw", "1", "--count", "2", "--config", str(plan), "--out", str(out)]) == 0
    caps = sorted(out.glob("*.bmxr"))
    assert len(caps) == 2
    assert main(["process", *map(str, caps), "--config", str(plan), "--out", str(out)]) == 0
    ds = read_dataset(out / "dataset.bmxd")
    assert ds.labels.tolist() == [1, 1]
    assert main(["augment", str(out / "dataset.bmxd"), "--factor", "2", "--out", str(out)]) == 0
    assert len(read_dataset(out / "augmented.bmxd")) == 6
