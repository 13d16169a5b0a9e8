"""Test the command line interface."""
import os

import luigi
import numpy as np
import pandas as pd
import pytest
import yaml
from numpy.testing import assert_allclose

from factorlens import cli
from factorlens.exceptions import (
    ConvergenceError,
    DegenerateInputError,
    FactorLensError,
    InputError,
    SelectionError,
)
from factorlens.io import load_dataset, load_json, load_matrix
from factorlens.synth import SynthSpec, generate


@pytest.fixture
def tmp_working_dir(tmp_path):
    """Run in a temporary directory with an empty luigi config."""
    cwd = os.getcwd()
    os.chdir(tmp_path)
    luigi_config = luigi.configuration.get_config()
    luigi_config.clear()
    yield tmp_path
    luigi_config.clear()
    os.chdir(cwd)


@pytest.fixture
def samples_csv(tmp_working_dir):
    """50 x 10 samples without header."""
    samples = np.random.default_rng(0).standard_normal((50, 10))
    pd.DataFrame(samples).to_csv("samples.csv", header=False, index=False)
    return samples


def test_fit_utm(samples_csv, capsys):
    """ """
    argv = ["fit", "samples.csv", "--est", "utm", "--lambda", "100", "--n-implied"]
    assert cli.main(argv + ["--out", "out/utm"]) == 0
    record = load_json("out/utm/estimate.json")
    assert record["metadata"]["n"] == 50
    assert record["metadata"]["trace_estimate"] == pytest.approx(
        record["metadata"]["trace_sample"]
    )
    assert "k_effective" in record["metadata"]
    assert f"avg_loglik {record['avg_loglik']:.10g}" in capsys.readouterr().out
    assert load_matrix("out/utm/sigma.csv").shape == (10, 10)


def test_fit_urm_isotropic(samples_csv):
    """ """
    assert cli.main(["fit", "samples.csv", "--est", "urm", "--k", "0", "--out", "out/urm"]) == 0
    trace = np.sum(samples_csv**2) / 50
    assert_allclose(load_matrix("out/urm/sigma.csv"), trace / 10 * np.eye(10), rtol=1e-8)


def test_fit_errors(samples_csv):
    """ """
    assert cli.main(["fit", "missing.csv", "--est", "urm", "--k", "1"]) == 2
    assert cli.main(["fit", "samples.csv", "--est", "urm", "--out", "out/no_k"]) == 2
    argv = ["fit", "samples.csv", "--covariance", "--n-implied", "--lambda", "1"]
    assert cli.main(argv) == 2
    with pytest.raises(SystemExit):
        cli.main(["fit", "samples.csv", "--est", "pca"])


def test_config_file(samples_csv):
    """ """
    with open("fit.yaml", "w") as config_file:
        yaml.dump({"est": "urm", "k": 2, "out": "out/from_config"}, config_file)
    assert cli.main(["fit", "samples.csv", "--config", "fit.yaml"]) == 0
    assert load_json("out/from_config/estimate.json")["rank"] == 2

    with open("bad.yaml", "w") as config_file:
        yaml.dump({"est": "urm", "colour": "red"}, config_file)
    assert cli.main(["fit", "samples.csv", "--config", "bad.yaml"]) == 2


def test_verify(tmp_working_dir, capsys):
    """ """
    assert cli.main(["verify", "--only", "prop2"]) == 0
    output = capsys.readouterr().out
    assert "prop2: pass" in output
    assert load_json("out/verify/report.json")["status"] == "pass"


def test_real_protocol_window_too_large(tmp_working_dir):
    """ """
    dates = pd.date_range("2020-01-01", periods=60).strftime("%Y-%m-%d")
    rng = np.random.default_rng(0)
    prices = np.exp(np.cumsum(0.01 * rng.standard_normal((60, 3)), axis=0))
    pd.DataFrame(prices, index=dates, columns=["A", "B", "C"]).to_csv("prices.csv")
    argv = ["real-protocol", "prices.csv", "--windows", "200", "--estimators", "urm"]
    assert cli.main(argv) == 2


def test_synth_study_deterministic(tmp_working_dir):
    """ """
    argv = [
        "synth-study",
        "--m",
        "6",
        "--k-star",
        "1",
        "--ns",
        "12",
        "--replications",
        "2",
        "--k-grid",
        "0",
        "1",
        "2",
        "--lambda-grid",
        "5",
        "10",
    ]
    assert cli.main(argv + ["--out", "out/first"]) == 0
    assert cli.main(argv + ["--out", "out/second"]) == 0
    first = pd.read_csv("out/first/scores.csv")
    second = pd.read_csv("out/second/scores.csv")
    pd.testing.assert_frame_equal(first, second)
    assert sorted(first["estimator"].unique()) == ["urm", "utm"]
    assert len(first) == 4


def test_synth_sample(tmp_working_dir):
    """Test that the samples and the ground truth sidecar match the generator."""
    argv = ["synth", "--m", "6", "--k-star", "2", "--sigma-r", "0.5", "--n", "20", "--seed", "3"]
    assert cli.main(argv + ["--out", "out/sample"]) == 0
    data, truth = generate(SynthSpec(m=6, k_star=2, sigma_f=5.0, n=20, sigma_r=0.5, seed=3))
    assert_allclose(load_dataset("out/sample/samples.csv").samples, data.samples)
    record = load_json("out/sample/truth.json")
    assert_allclose(record["sigma_star"], truth.sigma_star)
    assert_allclose(record["residual_star"], truth.residual_star)

    fit = ["fit", "out/sample/samples.csv", "--est", "em", "--k", "2", "--out", "out/em"]
    assert cli.main(fit) == 0
    assert cli.main(["synth", "--m", "3", "--k-star", "4", "--out", "out/bad"]) == 2


def test_edr_default_alpha():
    """ """
    assert cli.parse_args(["edr"]).alpha == 0.02


@pytest.mark.parametrize(
    "exception, code",
    [
        (InputError("x"), 2),
        (DegenerateInputError("x"), 2),
        (ConvergenceError("x"), 3),
        (SelectionError("x"), 3),
        (FactorLensError("x"), 1),
        (RuntimeError("x"), 1),
    ],
)
def test_exit_code(exception, code):
    """ """
    assert cli.exit_code(exception) == code
