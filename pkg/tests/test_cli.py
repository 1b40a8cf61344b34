import subprocess
import sys
from pathlib import Path

import pytest

from greedyco.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_run_ok(tmp_path, capsys):
    assert main(["run", str(CONFIGS / "wrga_worked_example.ini"), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "majorant_ok = True" in out and "trace:" in out
    assert len(list(tmp_path.glob("*.trace.csv"))) == 1


def test_usage_and_config_errors(tmp_path, capsys):
    assert main([]) == 1
    assert main(["run"]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[objective]\nkind = quadratic\nf = 1, 0\n[algorithm]\nname = WRGA\nt = 2\n")
    assert main(["run", str(bad), "--out", str(tmp_path)]) == 1
    assert "t must be in (0,1]" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.ini")]) == 1


def test_numerical_failure(tmp_path):
    cfg = tmp_path / "aborts.ini"
    cfg.write_text("[objective]\nkind = logsumexp\na = 1, 0\n[algorithm]\nname = WGAFR\n")
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 2


def test_check_modulus(capsys):
    assert main(["check-modulus", str(CONFIGS / "wrga_worked_example.ini")]) == 0
    out = capsys.readouterr().out
    assert "u,rho_estimate,gamma_u^q" in out and ": ok" in out


def test_acceptance_failure_exit_code(tmp_path, capsys):
    # an overly small C0 breaks the free-relaxation majorant
    cfg = tmp_path / "tight.ini"
    cfg.write_text((CONFIGS / "wgafr_worked_example.ini").read_text()
                   + "\n[analysis]\nc0 = 0.01\n")
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 0
    assert main(["suite", str(tmp_path), "--out", str(tmp_path / "out")]) == 3
    assert "majorant=False" in capsys.readouterr().out


def test_majorant_command(capsys):
    assert main(["majorant", "--v", "1", "--B", "8", "--q", "2", "--a0", "0.5", "--m", "2"]) == 0
    lines = capsys.readouterr().out.split()
    assert lines[0] == "m,a_m" and lines[1] == "0,0.5" and lines[2] == "1,0.4921875"


def test_majorant_bad_params():
    assert main(["majorant", "--v", "2", "--B", "8", "--q", "2", "--a0", "0.5", "--m", "2"]) == 1
    assert main(["majorant", "--v", "1", "--B", "8", "--q", "2", "--a0", "0.5", "--m", "2",
                 "--schedule", "cubic"]) == 1


def test_suite_command(tmp_path, capsys):
    assert main(["suite", str(CONFIGS), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "summary.csv").exists()
    assert main(["suite", str(tmp_path / "none"), "--out", str(tmp_path)]) == 1


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "greedyco", "majorant", "--v", "1", "--B", "8",
                        "--q", "2", "--a0", "0", "--m", "1"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.splitlines() == ["m,a_m", "0,0.0", "1,0.0"]
