import subprocess
import sys

import pytest

from ribbon_klein.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from ribbon_klein.device import Device
from ribbon_klein.errors import NumericalFailure

CONFIG = """\
N = 197
n_modes = 2
total_length_a0 = 130
D_a0 = 10
d_a0 = 5
theta_deg = 45
E_min_eV = 0.01
E_max_eV = 0.08
E_steps = 6
workers = 1
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(CONFIG)
    return path


def test_validate_ok(config_file, capsys):
    assert main(["validate", "--config", str(config_file)]) == EXIT_OK
    assert "ok" in capsys.readouterr().out


def test_validate_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("N = 197\nV0 = 0.5\n")
    assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "none.cfg")]) == EXIT_CONFIG


def test_run_energy_sweep(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_file), "--sweep", "energy", "--out", str(out)]) == EXIT_OK
    assert (out / "transmission.csv").exists() and (out / "manifest.csv").exists()
    rows = [r for r in (out / "transmission.csv").read_text().splitlines() if not r.startswith("#")]
    # one open channel below the second onset of the metallic ribbon
    assert all(-1e-9 <= float(r.split(",")[1]) <= 1 + 1e-6 for r in rows[1:])
    assert str(out / "transmission.csv") in capsys.readouterr().out


def test_run_with_values(config_file, tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--config", str(config_file), "--sweep", "angle", "--out", str(out), "--values", "0,30"])
    assert code == EXIT_OK
    assert (out / "transmission_theta_deg_30.csv").exists()


def test_sweep_value_outside_footprint(config_file, tmp_path, capsys):
    code = main(["run", "--config", str(config_file), "--sweep", "angle", "--out", str(tmp_path), "--values", "70"])
    assert code == EXIT_CONFIG
    assert "pristine" in capsys.readouterr().err


def test_numerical_failure_exit_code(config_file, tmp_path, monkeypatch):
    def broken(self, E, eta=0.0, with_ldos=False):
        raise NumericalFailure("singular block at row 0")

    monkeypatch.setattr(Device, "solve", broken)
    code = main(["run", "--config", str(config_file), "--sweep", "energy", "--out", str(tmp_path)])
    assert code == EXIT_NUMERICAL


def test_bad_arguments():
    with pytest.raises(SystemExit) as info:
        main(["run", "--config", "x", "--sweep", "sideways", "--out", "y"])
    assert info.value.code == 2


def test_console_script_entry(config_file):
    proc = subprocess.run(
        [sys.executable, "-m", "ribbon_klein.cli", "validate", "--config", str(config_file)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
