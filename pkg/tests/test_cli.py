import json
import subprocess
import sys

import numpy as np
import pytest

from landau_chaos.cli import main
from landau_chaos.core import ModelParams
from landau_chaos.experiments import ExperimentConfig, landau_ensemble, n_workers, run_experiment, validate


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_validate_examples():
    assert validate({"experiment": "grazing", "N": 8}) == ["eps_list: required for experiment 'grazing'"]
    diags = validate({"experiment": "conserve", "N": 64, "dt": -1e-3})
    assert len(diags) == 1 and diags[0].startswith("dt:")
    assert validate({"experiment": "grazing", "N": 8, "eps_list": [0.4, 0.2]}) == []


def test_validate_cross_field_checks():
    assert any("unknown experiment" in d for d in validate({"experiment": "nope"}))
    assert any(d.startswith("N_list") for d in validate({"experiment": "consistency", "N_list": [16, 8]}))
    assert any(d.startswith("colour") for d in validate({"experiment": "conserve", "N": 8, "dt": 0.1, "colour": 1}))
    assert any(d.startswith("dt") for d in validate({"experiment": "entropy", "N": 8, "dt": 2.0, "t_end": 1.0}))
    assert any(d.startswith("eps_list") for d in validate({"experiment": "grazing", "N": 8, "eps_list": [3.0, 0.1]}))
    assert validate({"N": 3}) == ["config has no 'experiment' field"]


def test_lambda_alias_and_options():
    cfg = ExperimentConfig.from_dict({"experiment": "conserve", "lambda": 0.5, "N": 4, "dt": 0.1, "n_steps": 7})
    assert cfg.lam == 0.5 and cfg.opt("n_steps") == 7 and cfg.opt("tol") == 1e-12


def test_cli_writes_outputs(tmp_path, capsys):
    cfg = _write(tmp_path, {"experiment": "grazing", "N": 5, "eps_list": [0.4, 0.2, 0.1], "n_theta": 24,
                            "n_phi": 24})
    out = tmp_path / "out"
    assert main(["grazing", "--config", cfg, "--output", str(out), "--assert"]) == 0
    header = (out / "results.csv").read_text().splitlines()[0]
    assert header == "test_function,eps,gap,G_landau,G_boltzmann,slope"
    man = json.loads((out / "manifest.json").read_text())
    assert man["passed"] and man["config"]["N"] == 5 and "plotdata/gap_bump_sum.csv" in man["outputs"]
    assert (out / "plotdata" / "gap_bump_sum.csv").read_text().startswith("x,y,yerr")
    assert "PASS grazing/bump_sum_slope" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path):
    bad = _write(tmp_path, {"experiment": "grazing", "N": 5})
    assert main(["grazing", "--config", bad, "--output", str(tmp_path / "o1")]) == 1
    # an unattainable threshold fails the check: exit 2 only with --assert
    cfg = _write(tmp_path, {"experiment": "grazing", "N": 5, "eps_list": [0.4, 0.2], "n_theta": 16, "n_phi": 16,
                            "min_slope": 5.0}, "strict.json")
    assert main(["grazing", "--config", cfg, "--output", str(tmp_path / "o2")]) == 0
    assert main(["grazing", "--config", cfg, "--output", str(tmp_path / "o3"), "--assert"]) == 2


def test_cli_overrides(tmp_path):
    cfg = _write(tmp_path, {"experiment": "conserve", "N": 8, "dt": 0.01, "n_steps": 10, "n_events": 100})
    out = tmp_path / "o"
    assert main(["conserve", "--config", cfg, "--output", str(out), "--n_steps", "20", "--N=6"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["options"]["n_steps"] == 20 and man["config"]["N"] == 6


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, {"experiment": "chaos-sweep", "N_list": [4, 8], "realizations": 6, "dt": 0.01,
                            "t_end": 0.05, "N_ref": 32, "seed": 3})
    for k in (1, 2):
        assert main(["chaos-sweep", "--config", cfg, "--output", str(tmp_path / f"r{k}")]) == 0
    assert (tmp_path / "r1/results.csv").read_bytes() == (tmp_path / "r2/results.csv").read_bytes()
    for f in (tmp_path / "r1/plotdata").iterdir():
        assert f.read_bytes() == (tmp_path / "r2/plotdata" / f.name).read_bytes()


def test_parallel_and_serial_ensembles_agree():
    p = ModelParams()
    args = (p, 16, range(5), 7, 0.01, 0.05, [0.0, 0.05], "state", {"kind": "bimodal"})
    _, serial = landau_ensemble(*args, workers=1)
    _, parallel = landau_ensemble(*args, workers=3)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a, b)


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("LANDAU_CHAOS_THREADS", "1")
    assert n_workers() == 1
    monkeypatch.setenv("LANDAU_CHAOS_THREADS", "x")
    with pytest.raises(ValueError):
        n_workers()


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "landau_chaos.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "experiment" in res.stdout


@pytest.mark.parametrize("cfg", [
    {"experiment": "contraction-w2", "N": 16, "dt": 0.01, "t_end": 0.1, "realizations": 2, "record_every": 0.05},
    {"experiment": "contraction-fourier", "N": 64, "dt": 0.01, "t_end": 0.1, "record_every": 0.05,
     "metric": {"n_xi": 100, "n_boot": 10}},
    {"experiment": "entropy", "N": 64, "dt": 0.01, "t_end": 0.1, "realizations": 2, "record_every": 0.05},
    {"experiment": "equilibrate", "N": 64, "dt": 0.01, "t_end": 0.1, "realizations": 2, "record_every": 0.05},
    {"experiment": "moments", "N": 16, "dt": 0.01, "t_end": 0.1, "realizations": 10, "record_every": 0.05},
    {"experiment": "consistency", "N_list": [4, 8], "samples_per_N": 2},
], ids=lambda c: c["experiment"])
def test_small_experiments_run(cfg):
    res = run_experiment(ExperimentConfig.from_dict(cfg))
    assert res.rows and res.checks
    assert all(len(r) == len(res.header) for r in res.rows)
