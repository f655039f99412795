"""CLI surface: exit codes, machine-parsable errors, output artifacts,
determinism of dataset/checkpoint bytes under fixed seeds, and the
prediction/ground-truth eval path."""

import json
import os

import numpy as np
import pytest

from wrenchflow.evalcli.cli import main

TINY = {
    "gen": {"n_episodes": 4, "episode_s": 3.0, "batch_size": 4, "stride": 25,
            "ratio_pos": 1, "ratio_neg": 1},
    "train": {"epochs": 2, "batch_size": 8, "d_model": 32, "n_layers": 2,
              "head": "linear"},
    "mlp": {"hidden": [32], "epochs": 2, "batch_size": 8},
    "eval": {"n_clips": 12, "batch_size": 8},
}


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps(TINY))
    return str(path)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory, tiny_config):
    out = tmp_path_factory.mktemp("ds")
    rc = main(["gen-data", "--config", tiny_config, "--seed", "5",
               "--out", str(out), "--no-plots"])
    assert rc == 0
    return str(out / "dataset.wsds")


def test_unknown_flag_fails():
    with pytest.raises(SystemExit):
        main(["eval", "--nonsense"])


def test_missing_file_is_one_line_error(capsys):
    rc = main(["train", "--dataset", "/does/not/exist.wsds", "--out", "/tmp/x"])
    assert rc != 0
    err = capsys.readouterr().err.strip()
    assert err.startswith("error:")
    assert "/does/not/exist.wsds" in err
    assert "\n" not in err


def test_config_schema_violation(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"gen": {"bogus_key": 1}}))
    rc = main(["gen-data", "--config", str(cfg), "--out", str(tmp_path)])
    assert rc != 0
    assert "bogus_key" in capsys.readouterr().err


def test_gen_data_writes_artifacts(tiny_dataset):
    out = os.path.dirname(tiny_dataset)
    assert os.path.exists(tiny_dataset)
    assert os.path.exists(os.path.join(out, "config_snapshot.json"))
    meta = json.load(open(os.path.join(out, "run_meta.json")))
    assert meta["seed"] == 5 and "git" in meta


def test_gen_data_deterministic_bytes(tmp_path, tiny_config):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        rc = main(["gen-data", "--config", tiny_config, "--seed", "9",
                   "--out", str(out), "--no-plots"])
        assert rc == 0
    assert (a / "dataset.wsds").read_bytes() == (b / "dataset.wsds").read_bytes()


@pytest.mark.parametrize("estimator", ["cfm", "mlp"])
def test_train_deterministic_checkpoints(tmp_path, tiny_config, tiny_dataset, estimator):
    outs = []
    for name in ("t1", "t2"):
        out = tmp_path / f"{estimator}_{name}"
        rc = main(["train", "--config", tiny_config, "--dataset", tiny_dataset,
                   "--estimator", estimator, "--seed", "7", "--out", str(out),
                   "--no-plots"])
        assert rc == 0
        outs.append((out / "model.wsmf").read_bytes())
    assert outs[0] == outs[1]


def test_infer_eval_round_trip(tmp_path, tiny_config, tiny_dataset):
    train_out = tmp_path / "train"
    rc = main(["train", "--config", tiny_config, "--dataset", tiny_dataset,
               "--estimator", "cfm", "--seed", "3", "--out", str(train_out),
               "--no-plots"])
    assert rc == 0
    infer_out = tmp_path / "infer"
    rc = main(["infer", "--config", tiny_config, "--ckpt", str(train_out / "model.wsmf"),
               "--dataset", tiny_dataset, "--seed", "3", "--out", str(infer_out),
               "--no-plots"])
    assert rc == 0
    eval_out = tmp_path / "eval"
    rc = main(["eval", "--config", tiny_config,
               "--pred", str(infer_out / "predictions.wsds"),
               "--gt", tiny_dataset, "--delta", "0.5", "--out", str(eval_out),
               "--no-plots"])
    assert rc == 0
    assert (eval_out / "metrics.csv").exists()
    report = (eval_out / "report.md").read_text()
    assert "|" in report and "detection_rate_pct" in report
    # timing sidecar exists, deterministic CSV carries no wall-clock columns
    header = (eval_out / "metrics.csv").read_text().splitlines()[0]
    assert "runtime" not in header


def test_eval_rejects_mismatched_counts(tmp_path, tiny_config, tiny_dataset, capsys):
    from wrenchflow import datagen as dg
    header, records = dg.read_dataset(tiny_dataset)
    import dataclasses
    smaller = dataclasses.replace(header, count=len(records) - 1)
    short_path = tmp_path / "short.wsds"
    dg.write_dataset(short_path, smaller, records[:-1])
    rc = main(["eval", "--config", tiny_config, "--pred", str(short_path),
               "--gt", tiny_dataset, "--out", str(tmp_path / "e"), "--no-plots"])
    assert rc != 0
    assert "counts differ" in capsys.readouterr().err


def test_rollout_command(tmp_path, tiny_config):
    out = tmp_path / "roll"
    rc = main(["rollout", "--config", tiny_config, "--seed", "2", "--out", str(out),
               "--no-plots"])
    assert rc == 0
    lines = (out / "rollout.csv").read_text().splitlines()
    assert lines[0].startswith("t_s,")
    assert len(lines) > 10


def test_baseline_gmo_command(tmp_path, tiny_config):
    out = tmp_path / "gmo"
    rc = main(["baseline", "--config", tiny_config, "--estimator", "gmo",
               "--seed", "4", "--out", str(out), "--no-plots"])
    assert rc == 0
    assert (out / "metrics.csv").exists()


def test_eval_emits_figure_by_default(tmp_path, tiny_config, tiny_dataset):
    train_out = tmp_path / "t"
    main(["train", "--config", tiny_config, "--dataset", tiny_dataset,
          "--estimator", "cfm", "--seed", "3", "--out", str(train_out), "--no-plots"])
    infer_out = tmp_path / "i"
    main(["infer", "--config", tiny_config, "--ckpt", str(train_out / "model.wsmf"),
          "--dataset", tiny_dataset, "--seed", "3", "--out", str(infer_out),
          "--no-plots"])
    eval_out = tmp_path / "e"
    rc = main(["eval", "--config", tiny_config,
               "--pred", str(infer_out / "predictions.wsds"),
               "--gt", tiny_dataset, "--out", str(eval_out)])
    assert rc == 0
    assert (eval_out / "metrics.png").exists()
