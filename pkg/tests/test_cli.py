import json

import numpy as np
import pandas as pd
import pytest
from typer.testing import CliRunner

from blockmix import __version__
from blockmix.cli import app

runner = CliRunner()

SMALL = ["--blocks", "2", "--components", "2", "--block-size", "3", "--n", "120", "--tau", "3.0", "--seed", "4"]
FAST = ["--bmax", "2", "--gmax", "2", "--restarts", "2", "--max-iter", "100"]


@pytest.fixture
def simulated(tmp_path):
    result = runner.invoke(app, ["simulate", "--out", str(tmp_path), *SMALL])
    assert result.exit_code == 0, result.output
    return tmp_path


@pytest.fixture
def fitted(simulated):
    result = runner.invoke(app, ["select", str(simulated / "data.csv"), "--out", str(simulated), *FAST])
    assert result.exit_code == 0, result.output
    return simulated


def test_version():
    result = runner.invoke(app, ["version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_init_writes_template_once(tmp_path):
    assert runner.invoke(app, ["init", "--out", str(tmp_path)]).exit_code == 0
    assert (tmp_path / "blockmix.yaml").exists()
    again = runner.invoke(app, ["init", "--out", str(tmp_path)])
    assert again.exit_code == 0
    assert "left untouched" in again.output


def test_tau_and_target_are_exclusive(tmp_path):
    result = runner.invoke(app, ["simulate", "--out", str(tmp_path), "--tau", "1", "--target-miscl", "0.05"])
    assert result.exit_code == 2
    assert "mutually exclusive" in result.output
    assert not (tmp_path / "data.csv").exists()


def test_bins_and_exponent_are_exclusive(simulated):
    result = runner.invoke(app, ["select", str(simulated / "data.csv"), "--out", str(simulated), "--bins", "4", "--bins-exponent", "5"])
    assert result.exit_code == 2
    assert "mutually exclusive" in result.output


def test_simulate_writes_data_and_truth(simulated):
    assert (simulated / "data.csv").exists()
    truth = json.loads((simulated / "truth.json").read_text())
    assert truth["kind"] == "truth"
    assert truth["true_omega"] == [1, 1, 1, 2, 2, 2]


def test_simulate_replicates(tmp_path):
    result = runner.invoke(app, ["simulate", "--out", str(tmp_path), "--replicates", "2", *SMALL])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "rep-000" / "data.csv").exists()
    assert (tmp_path / "rep-001" / "truth.json").exists()


def test_select_refine_evaluate_show(fitted):
    fit = fitted / "fit.json"
    assert json.loads(fit.read_text())["kind"] == "fit"

    refine = runner.invoke(app, ["refine", str(fitted / "data.csv"), "--fit", str(fit), "--out", str(fitted)])
    assert refine.exit_code == 0, refine.output
    assert (fitted / "refined.json").exists()

    evaluate = runner.invoke(
        app,
        [
            "evaluate",
            "--data", str(fitted / "data.csv"),
            "--fit", str(fit),
            "--truth", str(fitted / "truth.json"),
            "--refined", str(fitted / "refined.json"),
            "--out", str(fitted),
        ],
    )
    assert evaluate.exit_code == 0, evaluate.output
    report = json.loads((fitted / "report.json").read_text())
    assert report["refined"] is not None

    show = runner.invoke(app, ["show", str(fit)])
    assert show.exit_code == 0
    assert "Candidates" in show.output


def test_predict(fitted):
    result = runner.invoke(app, ["predict", str(fitted / "data.csv"), "--fit", str(fitted / "fit.json"), "--out", str(fitted)])
    assert result.exit_code == 0, result.output
    header = (fitted / "labels.csv").read_text().splitlines()[0]
    assert header.startswith("block1")


def test_categorical_column_survives_select_refine_evaluate(simulated):
    data_path = simulated / "data.csv"
    frame = pd.read_csv(data_path)
    frame["g"] = np.arange(len(frame)) % 3 + 1
    frame.to_csv(data_path, index=False)
    truth_path = simulated / "truth.json"
    truth = json.loads(truth_path.read_text())
    truth["true_omega"].append(1)
    truth_path.write_text(json.dumps(truth))

    select = runner.invoke(app, ["select", str(data_path), "--categorical", "g", "--out", str(simulated), *FAST])
    assert select.exit_code == 0, select.output
    fit = simulated / "fit.json"
    assert json.loads(fit.read_text())["variables"][-1]["kind"] == "categorical"

    refine = runner.invoke(app, ["refine", str(data_path), "--fit", str(fit), "--out", str(simulated)])
    assert refine.exit_code == 0, refine.output
    evaluate = runner.invoke(
        app,
        [
            "evaluate",
            "--data", str(data_path),
            "--fit", str(fit),
            "--truth", str(truth_path),
            "--refined", str(simulated / "refined.json"),
            "--out", str(simulated),
        ],
    )
    assert evaluate.exit_code == 0, evaluate.output



def test_two_columns_is_a_data_error(tmp_path):
    path = tmp_path / "narrow.csv"
    rows = np.random.default_rng(0).normal(size=(30, 2))
    path.write_text("a,b\n" + "\n".join(f"{x},{y}" for x, y in rows) + "\n")
    result = runner.invoke(app, ["select", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 3


def test_constant_column_is_a_data_error(tmp_path):
    path = tmp_path / "flat.csv"
    rows = np.random.default_rng(1).normal(size=(30, 2))
    path.write_text("a,b,c\n" + "\n".join(f"{x},{y},1.0" for x, y in rows) + "\n")
    result = runner.invoke(app, ["select", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 3


def test_refine_with_missing_fit(simulated):
    result = runner.invoke(app, ["refine", str(simulated / "data.csv"), "--fit", str(simulated / "none.json"), "--out", str(simulated)])
    assert result.exit_code == 3


def test_evaluate_needs_its_inputs(tmp_path):
    result = runner.invoke(app, ["evaluate", "--out", str(tmp_path)])
    assert result.exit_code == 2


def test_pipeline_and_summary(tmp_path):
    out = tmp_path / "run"
    result = runner.invoke(app, ["pipeline", "--out", str(out), "--replicates", "2", "--no-refine", *SMALL, *FAST])
    assert result.exit_code == 0, result.output
    assert "2/2" in result.output
    summary = runner.invoke(app, ["evaluate", "--summary", str(out), "--out", str(tmp_path)])
    assert summary.exit_code == 0, summary.output
    assert len((tmp_path / "summary.csv").read_text().splitlines()) == 3


def test_config_file_is_read(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("simulation:\n  blocks: 1\n  block_size: 4\n  n: 40\n  tau: 2.0\n")
    result = runner.invoke(app, ["simulate", "--out", str(tmp_path), "--config", str(cfg)])
    assert result.exit_code == 0, result.output
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["simulation"]["n"] == 40
    assert truth["true_omega"] == [1, 1, 1, 1]


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("selection:\n  nonsense: 1\n")
    result = runner.invoke(app, ["simulate", "--out", str(tmp_path), "--config", str(cfg)])
    assert result.exit_code == 2


def test_schema():
    result = runner.invoke(app, ["schema", "report"])
    assert result.exit_code == 0
    assert "block_ari" in result.output
    assert runner.invoke(app, ["schema", "bogus"]).exit_code == 3
