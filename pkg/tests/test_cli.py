import json

import pytest

import star_rsma.harness as harness
from star_rsma.cli import main


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"M": 4, "schemes": ["tin"], "ris_modes": ["none"], "trials": 1}))
    return p


def test_run_writes_csv(config, tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert main(["run", "--config", str(config), "--out", str(out), "--seed", "3"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("sweep_var,sweep_value,trial")
    assert len(lines) == 2


def test_sweep_to_stdout(config, capsys):
    assert main(["sweep", "--config", str(config), "--var", "P_C", "--values", "0.2,1.0",
                 "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["sweep_value"] for r in rows] == [0.2, 1.0]


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"M": 4, "typo_key": 1}))
    assert main(["run", "--config", str(p)]) == 2
    assert "typo_key" in capsys.readouterr().err
    assert main(["sweep", "--config", str(p.parent / "nope.json"), "--var", "n",
                 "--values", "1"]) == 2


def test_bad_sweep_values(config):
    assert main(["sweep", "--config", str(config), "--var", "n", "--values", "512,128"]) == 2
    assert main(["sweep", "--config", str(config), "--var", "n", "--values", "a,b"]) == 2


def test_trial_error_exit_code(config, monkeypatch, capsys):
    def boom(*a, **k):
        raise RuntimeError("solver blew up")
    monkeypatch.setattr(harness, "optimize", boom)
    assert main(["run", "--config", str(config)]) == 1
    assert "error:RuntimeError" in capsys.readouterr().err


def test_check_command(capsys):
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4
