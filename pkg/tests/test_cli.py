import csv
import json
import math

import numpy as np
import pytest

from pcg_vae import dataset, metrics, scoring, synth, vae
from pcg_vae.cli import main

CONFIG = """\
[synth]
seed = 3
count_normal = 20
count_abnormal = 4

[experiment]
seeds = 0
betas = ae, 0.01

[train]
epochs = 5
batch_size = 64
"""


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "c.ini").write_text(CONFIG)
    return tmp_path


@pytest.fixture
def data_dir(workspace):
    recs = synth.generate(synth.SynthConfig(seed=3, count_normal=20, count_abnormal=0))
    rng = np.random.default_rng(9)
    recs += [dataset.Recording(f"noise{i}", "synthetic", 0.3 * rng.standard_normal(16000), 2000,
                               dataset.Label.ABNORMAL) for i in range(4)]
    dataset.save_directory(workspace / "data", recs)
    return workspace / "data"


def test_synth_writes_corpus(workspace):
    assert main(["synth", "--config", "c.ini", "--out", "corpus"]) == 0
    recs = dataset.load_directory(workspace / "corpus", "synthetic")
    assert len(recs) == 24
    assert sum(r.label is dataset.Label.ABNORMAL for r in recs) == 4


def test_train_then_eval_then_correlate(workspace, data_dir):
    data = ["--data", str(data_dir), "--subset", "synthetic"]
    assert main(["train", "--config", "c.ini", *data, "--out", "run"]) == 0
    for name in ("checkpoint.json", "loss_history.csv", "split.csv"):
        assert (workspace / "run" / name).is_file()
    history = (workspace / "run" / "loss_history.csv").read_text().splitlines()
    assert history[0] == "epoch,mse,kl,beta,total" and len(history) == 6
    split_rows = list(csv.DictReader(open(workspace / "run" / "split.csv")))
    train_rows = [r for r in split_rows if r["role"] == "train"]
    assert len(train_rows) == 18 and all(r["label"] == "-1" for r in train_rows)

    ckpt = ["--checkpoint", "run/checkpoint.json"]
    assert main(["eval", "--config", "c.ini", *data, *ckpt, "--out", "ev"]) == 0
    report = json.loads((workspace / "ev" / "report.json").read_text())
    reports = scoring.read_scores(workspace / "ev" / "scores.csv")
    assert report["n_recordings"] == len(reports) == 24
    assert report["auc"] == metrics.roc_auc(reports).auc
    assert report["auc"] > 0.5
    roc = (workspace / "ev" / "roc.csv").read_text().splitlines()
    assert roc[0] == "fpr,tpr" and roc[1] == "0.0,0.0" and roc[-1] == "1.0,1.0"

    assert main(["score", "--config", "c.ini", *data, *ckpt, "--out", "sc"]) == 0
    assert (workspace / "sc" / "scores.csv").read_bytes() == (workspace / "ev" / "scores.csv").read_bytes()

    assert main(["correlate", "--config", "c.ini", *data, *ckpt, "--out", "co"]) == 0
    rho = float((workspace / "co" / "correlation.txt").read_text())
    assert rho == report["kl_recon_correlation"]


def test_train_is_byte_reproducible(workspace):
    for out in ("a", "b"):
        assert main(["train", "--config", "c.ini", "--seed", "2", "--out", out]) == 0
    for name in ("checkpoint.json", "loss_history.csv", "split.csv"):
        assert (workspace / "a" / name).read_bytes() == (workspace / "b" / name).read_bytes()
    model, cfg = vae.load_checkpoint(workspace / "a" / "checkpoint.json")
    assert cfg.seed == 2 and cfg.epochs == 5 and model.beta == 0.01


def test_eval_defaults_to_held_out_split(workspace):
    assert main(["train", "--config", "c.ini", "--beta", "ae", "--out", "run"]) == 0
    model, _ = vae.load_checkpoint(workspace / "run" / "checkpoint.json")
    assert model.mode is vae.Mode.PLAIN_AE
    assert main(["eval", "--config", "c.ini", "--checkpoint", "run/checkpoint.json", "--out", "ev"]) == 0
    report = json.loads((workspace / "ev" / "report.json").read_text())
    # 2 held-out normals plus 4 abnormals
    assert report["n_recordings"] == 6 and report["n_abnormal"] == 4
    assert report["kl_recon_correlation"] is None


def test_sweep_table(workspace, capsys):
    assert main(["sweep", "--config", "c.ini", "--out", "sw"]) == 0
    rows = list(csv.DictReader(open(workspace / "sw" / "sweep.csv")))
    assert [r["beta"] for r in rows] == ["ae", "0.01"]
    assert all(0.0 <= float(r["auc_mean"]) <= 1.0 for r in rows)
    assert math.isnan(float(rows[0]["corr_mean"]))
    runs = list(csv.DictReader(open(workspace / "sw" / "sweep_runs.csv")))
    assert len(runs) == 2
    assert "auc" in capsys.readouterr().out


@pytest.mark.parametrize("argv,message", [
    (["train", "--beta", "-1"], "beta"),
    (["train", "--beta", "lots"], "beta"),
    (["train", "--data", "nowhere"], "--subset"),
    (["train", "--data", "nowhere", "--subset", "e"], "missing reference"),
    (["train", "--subset", "e"], "config has none"),
    (["eval", "--checkpoint", "missing.json"], "missing.json"),
    (["train", "--config", "absent.ini"], "not found"),
])
def test_errors_exit_nonzero_without_output(workspace, capsys, argv, message):
    assert main([*argv, "--out", "never"]) == 1
    assert message in capsys.readouterr().err
    assert not (workspace / "never").exists()


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2
