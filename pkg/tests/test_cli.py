from __future__ import annotations

import json
import subprocess
import sys

import pytest
import yaml

from qcontrol import cli
from qcontrol.experiments import EXPERIMENTS

EXPECTED = [
    "lz-cd", "ising-cd", "ising-momentum-cd", "lmg-cd", "lmg-pulse-scan", "vagp-solve", "phase-ledger",
    "grape-state", "grape-gate", "grape-dicke", "qsl-sweep", "rl-qubit-prep", "rl-cd-protocol", "rl-feedback",
]


def write_config(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_list_contents(capsys):
    assert cli.main(["list"]) == 0
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert names == EXPECTED
    assert sorted(EXPERIMENTS) == sorted(EXPECTED)


def test_misspelled_key_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", {"experiment": "lz-cd", "parameters": {"n_stpes": 10}})
    assert cli.main(["validate", "--config", cfg]) == 2
    assert "parameters.n_stpes" in capsys.readouterr().err


def test_misspelled_top_level_key(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", {"experiment": "lz-cd", "rng_sed": 1})
    assert cli.main(["run", "--config", cfg]) == 2
    assert "rng_sed" in capsys.readouterr().err


def test_wrong_type_and_choice(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", {"experiment": "grape-gate", "parameters": {"n_steps": "ten"}})
    assert cli.main(["validate", "--config", cfg]) == 2
    assert cli.main(["validate", "--config", cfg, "--set", "n_steps=10", "--set", "axis=y"]) == 2
    assert "parameters.axis" in capsys.readouterr().err


def test_unknown_experiment(capsys):
    assert cli.main(["validate", "--set", "experiment=nope"]) == 2


def test_empty_config_echoes_defaults(tmp_path):
    csv_path, json_path, _ = cli.run_config(cli.resolve_config({"experiment": "grape-state", "output_dir": str(tmp_path)}))
    meta = json.loads(json_path.read_text())
    assert meta["config"]["parameters"] == EXPERIMENTS["grape-state"].defaults
    assert meta["config"]["rng_seed"] == 0
    assert meta["config_hash"] == cli.config_hash(meta["config"])
    assert csv_path.name == f"grape-state-{meta['config_hash']}.csv"
    assert meta["n_rows"] == 10


def test_run_writes_files_and_is_byte_identical(tmp_path, capsys):
    args = ["run", "--set", "experiment=vagp-solve", "--set", "n_T=3", "--set", "n_steps=50", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    csv_path = capsys.readouterr().out.split()[0]
    first = open(csv_path, "rb").read()
    assert cli.main(args) == 0
    assert open(csv_path, "rb").read() == first
    assert b"\r" not in first
    header = first.decode().splitlines()[0]
    assert header == "T,fidelity_bare,fidelity_1body,fidelity_2body"


def test_seed_changes_hash(tmp_path):
    a = cli.resolve_config({"experiment": "lz-cd"})
    b = cli.resolve_config({"experiment": "lz-cd", "rng_seed": 1})
    c = cli.resolve_config({"experiment": "lz-cd", "output_dir": "elsewhere"})
    assert cli.config_hash(a) != cli.config_hash(b)
    assert cli.config_hash(a) == cli.config_hash(c)


def test_dotted_overrides():
    raw = cli.apply_overrides({}, ["experiment=qsl-sweep", "parameters.phi=3.14159", "gate=Uz", "restarts_per_T=2"])
    cfg = cli.resolve_config(raw)
    assert cfg["parameters"]["phi"] == 3.14159
    assert cfg["parameters"]["gate"] == "Uz"
    assert cfg["parameters"]["restarts_per_T"] == 2


def test_int_accepted_for_float_and_nullable():
    cfg = cli.resolve_config({"experiment": "grape-gate", "parameters": {"phi": 2, "T": 3}})
    assert cfg["parameters"]["phi"] == 2.0 and isinstance(cfg["parameters"]["phi"], float)
    assert cfg["parameters"]["T"] == 3.0


def test_numerical_failure_exit_3(tmp_path, capsys):
    # the harmonic CD term is undefined once the ramp crosses g = 1
    args = ["run", "--set", "experiment=lmg-cd", "--set", "g_delta=-1.5", "--set", "n_particles=[10]",
            "--set", "n_steps=20", "--out", str(tmp_path)]
    code = cli.main(args)
    err = capsys.readouterr().err
    assert code == 3, err
    assert "numerical failure" in err


def test_csv_float_format():
    assert cli.format_value(0.1) == "0.10000000000000001"
    assert cli.format_value(True) == "true"
    assert cli.format_value(3) == "3"


def test_console_script_lz_cd(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "qcontrol.cli", "run", "--set", "experiment=lz-cd", "--set", "n_steps=2000", "--out", str(tmp_path)],
        capture_output=True, text=True, check=True,
    )
    csv_path = out.stdout.split()[0]
    lines = open(csv_path).read().splitlines()
    assert lines[0] == "t,fidelity_bare,fidelity_cd"
    assert min(float(l.split(",")[2]) for l in lines[1:]) >= 1 - 1e-6


def test_qsl_sweep_output(tmp_path):
    cfg = cli.resolve_config({"experiment": "qsl-sweep", "output_dir": str(tmp_path),
                              "parameters": {"T_max": 2.0, "T_min": 1.0, "n_T": 11, "n_seeds": 3}})
    csv_path, json_path, table = cli.run_config(cfg)
    assert list(table.columns) == ["T", "J_opt"]
    meta = json.loads(json_path.read_text())
    assert abs(meta["results"]["T_star"] - 1.6) < 0.11


def test_rl_feedback_columns(tmp_path):
    cfg = cli.resolve_config({"experiment": "rl-feedback", "output_dir": str(tmp_path),
                              "parameters": {"iterations": 2, "batch_size": 16}})
    _, _, table = cli.run_config(cfg)
    assert list(table.columns)[:4] == ["iteration", "mean_fid", "min_fid", "max_fid"]
