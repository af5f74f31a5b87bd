"""Config validation, dotted overrides, snapshots and the CLI pipeline."""

import configparser

import numpy as np
import pytest

from cil import config as cfgmod
from cil.cli import METRIC_COLUMNS, main

pytestmark = pytest.mark.filterwarnings("ignore::DeprecationWarning")

TINY_SETS = [
    "--set", "data.episodes=12",
    "--set", "data.test_worlds=2",
    "--set", "data.image_size=32",
    "--set", "data.resolution=2.5",
]


def test_default_config_schema():
    cfg = cfgmod.default_config()
    assert cfg["data"]["episodes"] == 200
    assert cfg["data"]["horizon"] == 10
    assert cfg["world"]["dt"] == 0.3
    assert cfg["train"]["batch_size"] == 128
    assert cfg["correction"]["n_grad"] == 5
    assert cfg["correction"]["mode"] == "linearized"


def test_override_parsing():
    cfg = cfgmod.load_config(None, ["train.epochs=7",
                                    "correction.gamma=0.01",
                                    "correction.mode=recompleted"])
    assert cfg["train"]["epochs"] == 7
    assert cfg["correction"]["gamma"] == 0.01
    assert cfg["correction"]["mode"] == "recompleted"


def test_override_errors_name_the_key():
    with pytest.raises(cfgmod.ConfigError, match="train.nope"):
        cfgmod.load_config(None, ["train.nope=1"])
    with pytest.raises(cfgmod.ConfigError, match="train.epochs"):
        cfgmod.load_config(None, ["train.epochs=abc"])
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.load_config(None, ["no-equals-sign"])


def test_config_file_and_snapshot(tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text("[train]\nepochs = 9\n[data]\nepisodes = 5\n")
    cfg = cfgmod.load_config(ini, ["train.seed=3"])
    assert cfg["train"]["epochs"] == 9
    assert cfg["data"]["episodes"] == 5
    assert cfg["train"]["seed"] == 3
    cfgmod.write_snapshot(cfg, tmp_path)
    snap = tmp_path / "config_resolved.ini"
    parser = configparser.ConfigParser()
    parser.read(snap)
    assert parser.getint("train", "epochs") == 9
    # snapshot reloads to the identical resolved config
    assert cfgmod.load_config(snap, []) == cfg


def test_config_file_unknown_section(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[nосats]\nx = 1\n")
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.load_config(ini, [])


def test_main_error_exit_codes(tmp_path, capsys):
    assert main(["gen-data", "--out", str(tmp_path), "--set", "bad"]) == 2
    assert main(["train", "--data", str(tmp_path / "missing"),
                 "--out", str(tmp_path), "--method", "il"]) == 2


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Full tiny pipeline: gen-data -> train -> eval-open/closed -> report."""
    root = tmp_path_factory.mktemp("pipe")
    data = root / "data"
    run = root / "run"
    assert main(["gen-data", "--out", str(data)] + TINY_SETS) == 0
    assert main(["train", "--data", str(data), "--out", str(run),
                 "--method", "il", "--set", "train.epochs=1",
                 "--set", "train.batch_size=32"] + TINY_SETS) == 0
    assert main(["eval-open", "--checkpoint", str(run / "il.npz"),
                 "--data", str(data), "--out", str(run)] + TINY_SETS) == 0
    assert main(["eval-closed", "--checkpoint", str(run / "il.npz"),
                 "--data", str(data), "--out", str(run),
                 "--jobs", "1"] + TINY_SETS) == 0
    report = root / "report"
    assert main(["report", str(run), "--out", str(report)]) == 0
    return data, run, report


def test_pipeline_outputs_exist(pipeline):
    data, run, report = pipeline
    for path in (data / "manifest.json", data / "train.jsonl",
                 data / "worlds_test.jsonl", data / "config_resolved.ini",
                 run / "il.npz", run / "il_curve.csv",
                 run / "open_loop.json", run / "open_loop.csv",
                 run / "metrics.csv", run / "episodes.jsonl",
                 report / "combined.csv"):
        assert path.exists(), path
    assert list(report.glob("*.svg"))


def test_metrics_csv_schema(pipeline):
    _, run, _ = pipeline
    lines = (run / "metrics.csv").read_text().strip().splitlines()
    assert lines[0] == ",".join(METRIC_COLUMNS)
    assert len(lines) == 2
    row = dict(zip(METRIC_COLUMNS, lines[1].split(",")))
    assert row["method"] == "il"
    assert row["episodes"] == "2"
    assert 0.0 <= float(row["grr_pct"]) <= 100.0
    assert 0.0 <= float(row["cr_pct"]) <= 100.0
    assert int(row["kcv_count"]) >= 0


def test_train_deterministic_across_runs(pipeline, tmp_path):
    data, run, _ = pipeline
    out2 = tmp_path / "run2"
    assert main(["train", "--data", str(data), "--out", str(out2),
                 "--method", "il", "--set", "train.epochs=1",
                 "--set", "train.batch_size=32"] + TINY_SETS) == 0
    assert (out2 / "il.npz").read_bytes() == (run / "il.npz").read_bytes()
    assert (out2 / "il_curve.csv").read_text() == \
        (run / "il_curve.csv").read_text()


def test_eval_closed_deterministic(pipeline, tmp_path):
    data, run, _ = pipeline
    out2 = tmp_path / "closed2"
    assert main(["eval-closed", "--checkpoint", str(run / "il.npz"),
                 "--data", str(data), "--out", str(out2),
                 "--jobs", "2"] + TINY_SETS) == 0
    assert (out2 / "metrics.csv").read_bytes() == \
        (run / "metrics.csv").read_bytes()


def test_combined_csv(pipeline):
    _, _, report = pipeline
    lines = (report / "combined.csv").read_text().strip().splitlines()
    assert lines[0].startswith(",".join(METRIC_COLUMNS[:2]))
    assert len(lines) >= 2
