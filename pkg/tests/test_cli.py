import json
import os

import numpy as np
import pytest

from idpg.cli import main
from idpg.latent import Product, UniformBall, TruncGaussianSpec, save_model


@pytest.fixture
def model_path(tmp_path):
    path = str(tmp_path / "model.json")
    save_model(Product(UniformBall(2.0, 1), UniformBall(3.0, 1)), path)
    return path


@pytest.fixture
def gauss_path(tmp_path):
    path = str(tmp_path / "gauss.json")
    save_model(Product(TruncGaussianSpec((0.4,), (60.0,), 3.0),
                       TruncGaussianSpec((0.6,), (60.0,), 3.0)), path)
    return path


def test_sample_writes_graph(model_path, tmp_path, capsys):
    out = str(tmp_path / "graph.json")
    edges = str(tmp_path / "edges.txt")
    rc = main(["sample", "--model", model_path, "--rule", "perennial",
               "--seed", "5", "--out", out, "--edge-list", edges])
    assert rc == 0
    info = json.loads(capsys.readouterr().out)
    doc = json.load(open(out))
    assert len(doc["nodes"]) == info["nodes"]
    assert len(open(edges).read().splitlines()) == info["edges"]


def test_sample_lifetime_rule(model_path, capsys):
    rc = main(["sample", "--model", model_path, "--rule", "lifetime",
               "--eta", "1.0", "--window", "1.0", "--seed", "3"])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["rule"] == "lifetime"


def test_expect_values(model_path, capsys):
    rc = main(["expect", "--model", model_path, "--eta", "1", "--window", "1"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["lambda"] == pytest.approx(6.0)
    assert out["expected_edges"]["perennial"] == pytest.approx(9.0)
    assert out["expected_edges"]["ephemeral"] == pytest.approx(3.0)


def test_heat_csv(model_path, tmp_path, capsys):
    out = str(tmp_path / "heat.csv")
    rc = main(["heat", "--model", model_path, "--resolution", "32", "--out", out])
    assert rc == 0
    lines = open(out).read().splitlines()
    assert lines[0] == "g,r,value"
    assert len(lines) == 1 + 32 * 32


def test_spectral_reference(gauss_path, capsys):
    rc = main(["spectral", "--model", gauss_path])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["reference"]) == 1
    assert out["reference"][0] > 0


def test_pde_trajectory(gauss_path, tmp_path, capsys):
    out = str(tmp_path / "traj.csv")
    rc = main(["pde", "--model", gauss_path, "--regime", "diffusion",
               "--nu", "0.01", "--bc", "reflecting", "--t-end", "0.5",
               "--snapshots", "5", "--resolution", "64", "--out", out])
    assert rc == 0
    lines = open(out).read().splitlines()
    assert lines[0].startswith("time,mass_G")
    assert len(lines) > 2
    first = [float(x) for x in lines[1].split(",")]
    last = [float(x) for x in lines[-1].split(",")]
    assert last[3] == pytest.approx(first[3], rel=1e-6)  # reflecting keeps lambda


def test_foodweb_matrix(tmp_path, capsys):
    out = str(tmp_path / "matrix.csv")
    rc = main(["foodweb", "--lam", "50", "--out-matrix", out,
               "--mc-samples", "100000", "--seed", "1"])
    assert rc == 0
    lines = open(out).read().splitlines()
    assert lines[0] == "source,target,expected_edges,affinity"
    assert len(lines) == 1 + 25


def test_experiment_runs_and_checks(tmp_path, capsys):
    cfg = {"name": "overlap", "root_seed": 9}
    cfg_path = str(tmp_path / "cfg.json")
    json.dump(cfg, open(cfg_path, "w"))
    out_dir = str(tmp_path / "results")
    rc = main(["experiment", "--config", cfg_path, "--out", out_dir,
               "--format", "csv", "--check"])
    assert rc == 0
    assert os.path.exists(os.path.join(out_dir, "overlap.csv"))


def test_experiment_check_failure_exits_2(tmp_path, capsys):
    # two tiny growth windows land far from the asymptotic exponents
    cfg = {"name": "growth_overlap",
           "params": {"lam_targets": [2, 4], "pairs": 2000}}
    cfg_path = str(tmp_path / "bad.json")
    json.dump(cfg, open(cfg_path, "w"))
    rc = main(["experiment", "--config", cfg_path, "--out", str(tmp_path),
               "--check"])
    assert rc == 2


def test_experiment_by_name(tmp_path, capsys):
    rc = main(["experiment", "--name", "growth_overlap", "--out", str(tmp_path),
               "--format", "json"])
    assert rc == 0
    doc = json.load(open(os.path.join(str(tmp_path), "growth_overlap.json")))
    assert "metadata" in doc and "columns" in doc
