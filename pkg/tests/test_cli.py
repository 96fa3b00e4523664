import subprocess
import sys

import numpy as np
import pytest

from hexpress import io as hio
from hexpress.cli import main


def test_list(capsys):
    assert main(["list"]) == 0
    assert "arch" in capsys.readouterr().out.split()


def test_show_roundtrip(capsys, tmp_path):
    assert main(["show", "piston"]) == 0
    text = capsys.readouterr().out
    path = tmp_path / "p.yaml"
    path.write_text(text)
    assert main(["show", str(path)]) == 0
    assert capsys.readouterr().out == text


def test_selftest(capsys):
    assert main(["selftest"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 6


def test_analysis_only(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "ddomain1", "--analysis-only", "--nex", "16", "--ney", "12", "--out", str(out), "-q"]) == 0
    assert {p.name for p in out.iterdir()} == {"final.vtk", "density.svg"}
    rho = hio.read_vtk_cell_scalars(out / "final.vtk", "density")
    assert rho.shape == (16 * 12,)


def test_short_optimization(tmp_path):
    out = tmp_path / "o"
    args = ["run", "arch", "--iters", "3", "--nex", "16", "--ney", "8", "--seed-masks", "2x2",
            "--step", "0.2", "--smooth", "1", "--freeze-gamma", "--out", str(out), "-q"]
    assert main(args) == 0
    assert {p.name for p in out.iterdir()} == {"log.csv", "final.vtk", "density.svg", "masks.txt"}
    lines = (out / "log.csv").read_text().splitlines()
    assert lines[0] == "iter,objective,vol_frac,gsi,g1,g2" and len(lines) == 4
    params = np.loadtxt(out / "masks.txt")
    assert params.shape == (4, 21)
    assert np.all(params[:, 6] == 1.0)


def test_check_gradients(capsys):
    assert main(["run", "arch", "--check-gradients"]) == 0
    out = capsys.readouterr().out
    assert "max relative error" in out


def test_problem_errors_exit_2(tmp_path, capsys):
    assert main(["run", "bridge"]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("base: arch\nfoo: 1\n")
    assert main(["run", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["run", "arch", "--iters", "0"]) == 2
    with pytest.raises(SystemExit) as info:
        main(["run", "arch", "--seed-masks", "3by2"])
    assert info.value.code == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "hexpress.cli", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and "gripper" in r.stdout
