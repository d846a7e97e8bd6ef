import json
import subprocess
import sys

import numpy as np
import pytest

from survbnn.cli import main, replicate_seed, study_from_settings
from survbnn.metrics import aggregate
from survbnn.pipeline import FittedModel, run_replicate

QUICK = ["--iterations", "60", "--point-fit-iterations", "30"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--case", 1, "--n", 200, "--seed", 7, "--out", out) == 0
    return out


def test_simulate_split_and_files(tmp_path):
    assert run("simulate", "--n", 100, "--seed", 1, "--out", tmp_path) == 0
    assert len((tmp_path / "train.csv").read_text().splitlines()) == 76
    assert len((tmp_path / "test.csv").read_text().splitlines()) == 26
    for name in ("latent_train.csv", "latent_test.csv", "generator.json", "effective_config.json"):
        assert (tmp_path / name).is_file()


def test_simulate_is_byte_identical(tmp_path, sim_dir):
    assert run("simulate", "--case", 1, "--n", 200, "--seed", 7, "--out", tmp_path) == 0
    for name in ("train.csv", "test.csv", "latent_train.csv"):
        assert (tmp_path / name).read_bytes() == (sim_dir / name).read_bytes()


def test_invalid_case_is_usage_error(tmp_path, capsys):
    assert run("simulate", "--case", 9, "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: ") and err.count("\n") == 1


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"case": 1, "colour": "red"}))
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 2
    assert "colour" in capsys.readouterr().err


def test_flags_override_config_and_echo_reproduces(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"case": 2, "n": 80, "seed": 3}))
    a = tmp_path / "a"
    assert run("simulate", "--config", cfg, "--n", 60, "--out", a) == 0
    echo = json.loads((a / "effective_config.json").read_text())
    assert (echo["case"], echo["n"], echo["seed"]) == (2, 60, 3)
    b = tmp_path / "b"
    assert run("simulate", "--config", a / "effective_config.json", "--out", b) == 0
    assert (a / "train.csv").read_bytes() == (b / "train.csv").read_bytes()


def test_pseudo_variants(tmp_path, sim_dir):
    data = sim_dir / "train.csv"
    assert run("pseudo", "--data", data, "--out", tmp_path / "p") == 0
    lines = (tmp_path / "p" / "pseudo.csv").read_text().splitlines()
    assert lines[0] == "id,time,pseudo_value" and len(lines) == 1 + 150 * 9
    assert run("pseudo", "--data", data, "--method", "conditional", "--out", tmp_path / "c") == 0
    assert (tmp_path / "c" / "pseudo.csv").read_text().startswith("id,start,time,pseudo_value")
    assert run("pseudo", "--data", data, "--grid", "0.5,1.0,2.0", "--out", tmp_path / "g") == 0
    assert len((tmp_path / "g" / "pseudo.csv").read_text().splitlines()) == 1 + 150 * 3


def test_unit_ipcw_file_equals_plain_on_same_estimator_path(tmp_path, sim_dir):
    data = sim_dir / "train.csv"
    assert run("pseudo", "--data", data, "--estimator", "exp", "--out", tmp_path / "a") == 0
    assert run("pseudo", "--data", data, "--method", "ipcw", "--provider", "unit",
               "--out", tmp_path / "b") == 0
    a = np.loadtxt(tmp_path / "a" / "pseudo.csv", delimiter=",", skiprows=1)
    b = np.loadtxt(tmp_path / "b" / "pseudo.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(a[:, :2], b[:, :2])
    np.testing.assert_allclose(a[:, 2], b[:, 2], rtol=0, atol=1e-12)


def test_external_provider_without_file(tmp_path, sim_dir, capsys):
    data = sim_dir / "train.csv"
    assert run("pseudo", "--data", data, "--method", "ipcw", "--provider", "external",
               "--out", tmp_path) != 0
    assert run("pseudo", "--data", data, "--method", "ipcw", "--provider", "external",
               "--weights", tmp_path / "missing.csv", "--out", tmp_path) == 1
    assert "no such weight file" in capsys.readouterr().err


@pytest.fixture(scope="module")
def fit_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    assert run("pseudo", "--data", sim_dir / "train.csv", "--out", out) == 0
    assert run("fit", "--data", sim_dir / "train.csv", "--pseudo", out / "pseudo.csv",
               "--seed", 4, "--out", out, *QUICK) == 0
    return out


def test_fit_outputs_and_reproducibility(fit_dir, sim_dir, tmp_path):
    assert (fit_dir / "elbo.csv").read_text().startswith("network,iteration,elbo\n")
    assert run("fit", "--data", sim_dir / "train.csv", "--pseudo", fit_dir / "pseudo.csv",
               "--seed", 4, "--out", tmp_path, *QUICK) == 0
    assert (tmp_path / "fit.json").read_bytes() == (fit_dir / "fit.json").read_bytes()


def test_zero_iteration_fit_echoes_initialisation(fit_dir, sim_dir, tmp_path):
    assert run("fit", "--data", sim_dir / "train.csv", "--pseudo", fit_dir / "pseudo.csv",
               "--iterations", 0, "--point-fit-iterations", 0, "--out", tmp_path) == 0
    model = FittedModel.load(tmp_path / "fit.json")
    np.testing.assert_array_equal(model.states[0].mu, model.init_params[0])
    np.testing.assert_array_equal(model.states[0].omega, -3.0)


def test_predict_outputs(fit_dir, sim_dir, tmp_path):
    assert run("predict", "--fit", fit_dir / "fit.json", "--data", sim_dir / "test.csv",
               "--draws", 50, "--plot-by", "z1", "--out", tmp_path) == 0
    lines = (tmp_path / "predictions.csv").read_text().splitlines()
    assert lines[0] == "id,time,mean,lower95,upper95"
    assert len(lines) == 1 + 50 * 9
    assert (tmp_path / "survival.svg").read_text().count('class="curve-group"') == 2


def test_predict_dimension_mismatch(fit_dir, tmp_path, capsys):
    (tmp_path / "new.csv").write_text("id,x1,x2\na,0.1,0.2\n")
    assert run("predict", "--fit", fit_dir / "fit.json", "--data", tmp_path / "new.csv",
               "--out", tmp_path) == 1
    assert "dimension mismatch" in capsys.readouterr().err


EVAL = ["--n", 120, "--draws", 50, "--iterations", 40, "--point-fit-iterations", 20]


def test_evaluate_single_replicate_equals_manual_run(tmp_path):
    assert run("evaluate", "--replicates", 1, "--seed", 11, "--out", tmp_path, *EVAL) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    settings = json.loads((tmp_path / "effective_config.json").read_text())
    sums, _, _ = run_replicate(study_from_settings(settings), replicate_seed(11, 0))
    manual = aggregate([sums])
    assert [r["bias"] for r in report["time_points"]] == manual.bias.tolist()
    assert [r["coverage"] for r in report["time_points"]] == manual.coverage.tolist()


def test_replicate_order_does_not_change_the_report(tmp_path):
    assert run("evaluate", "--replicates", 1, "--seed", 11, "--out", tmp_path, *EVAL) == 0
    study = study_from_settings(json.loads((tmp_path / "effective_config.json").read_text()))
    reps = [run_replicate(study, replicate_seed(11, r))[0] for r in range(2)]
    a, b = aggregate(reps), aggregate(reps[::-1])
    assert a.to_dict() == b.to_dict()


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "survbnn.cli", "simulate", "--case", "0",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stderr.startswith("error:") and proc.stderr.count("\n") == 1
