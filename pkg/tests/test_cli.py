import json

from crupwind.cli import main
from crupwind.config import RunConfig, write_config


def test_run_subcommand(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    write_config(RunConfig(mesh_n=1, solution="pulse", dt=0.01, t_end=0.02, vtk_every=1), cfg)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--deterministic"]) == 0
    line = json.loads(capsys.readouterr().out)
    assert line["ok"] and line["steps"] == 2
    for name in ("ledger.csv", "summary.json", "config.txt", "state_0002.vtk", "state_0002_faces.vtk"):
        assert (out / name).exists()


def test_mesh_override(tmp_path, capsys):
    from crupwind.gmsh import write_msh
    from crupwind.mesh import build_structured_cube
    write_msh(build_structured_cube(1), tmp_path / "m.msh")
    cfg = tmp_path / "c.txt"
    write_config(RunConfig(solution="rest", dt=0.1, t_end=0.1), cfg)
    assert main(["run", "--config", str(cfg), "--mesh", str(tmp_path / "m.msh"), "--out", str(tmp_path / "o")]) == 0
    assert main(["run", "--config", str(cfg), "--mesh", "2", "--out", str(tmp_path / "o2")]) == 0


def test_failing_run_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    write_config(RunConfig(mesh_n=2, solution="pulse", dt=0.5, t_end=0.5, max_newton=1, max_picard=0,
                           solver_tol=1e-14), cfg)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert json.loads(capsys.readouterr().out)["failure"]["reason"] == "NonconvergenceError"


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("mesh.n = -1\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "mesh.n" in capsys.readouterr().err


def test_study_subcommand(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    write_config(RunConfig(solution="rest", t_end=0.1), cfg)
    assert main(["study", "--config", str(cfg), "--levels", "1,2,3", "--dt-rule", "h", "--out", str(tmp_path / "s")]) == 0
    assert "theoretical exponent" in capsys.readouterr().out
    assert (tmp_path / "s" / "study.json").exists()


def test_check_subcommand(capsys):
    assert main(["check", "--quick"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out
