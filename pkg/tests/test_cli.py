import numpy as np
import pytest

from jouleheat import output
from jouleheat.cli import main


def test_solve_example1(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", "--preset", "example1", "--k", "1", "--l", "1", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.glob("*.vtk")) == ["solution_0000.vtk", "solution_0001.vtk",
                                                          "solution_0002.vtk"]
    rows = (out / "diagnostics.csv").read_text().splitlines()
    assert len(rows) == 3
    summary = output.read_summary(out / "summary.txt")
    assert summary["status"] == "ok" and summary["vertices"] == "27"
    assert (out / "diagnostics.png").stat().st_size > 0


def test_malformed_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[problem]\nk = 'two'\n")
    assert main(["solve", "--config", str(cfg)]) == 2
    assert "[problem] k" in capsys.readouterr().err
    cfg.write_text("[problem\n")
    assert main(["solve", "--config", str(cfg)]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["solve", "--preset", "nope"]) == 2


def test_solver_failure_exit_code(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[problem]\npreset = 'example2'\nk = 1\nl = 1\n[solver]\nfp_max_iter = 2\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_example2_k2(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", "--preset", "example2", "--k", "2", "--l", "2", "--out", str(out)]) == 0


def test_convergence_example1(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[problem]\npreset = 'example1'\n[convergence]\nk_min = 1\nk_max = 3\n")
    out = tmp_path / "o"
    assert main(["convergence", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "convergence.csv").read_text().splitlines()
    assert len(lines) == 4
    assert lines[1].split(",")[6] == "nan" and lines[2].split(",")[6] != "nan"
    assert (out / "convergence.png").exists() and (out / "convergence.dat").exists()


def test_convergence_needs_reference(tmp_path):
    assert main(["convergence", "--preset", "example2", "--out", str(tmp_path)]) == 2


def test_adapt_infinite_tolerance_matches_solve(tmp_path):
    cfg = tmp_path / "a.toml"
    cfg.write_text("[problem]\npreset = 'example3'\nk = 1\nl = 1\n[adapt]\ntol = inf\n")
    assert main(["adapt", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    for n in range(3):
        name = f"solution_{n:04d}.vtk"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "s" / name).read_bytes()


def test_adapt_example4_reports_efficiency(tmp_path):
    cfg = tmp_path / "a.toml"
    cfg.write_text("[problem]\npreset = 'example4'\nk = 1\nl = 1\n"
                   "[adapt]\ntol = 1e-3\nmax_vertices = 400\nbaseline_k = 1\nreference_k = 2\n")
    out = tmp_path / "o"
    assert main(["adapt", "--config", str(cfg), "--out", str(out)]) == 0
    eff = (out / "efficiency.csv").read_text().splitlines()
    assert eff[0] == "kind,k,vertices,goal_error" and len(eff) == 3
    assert (out / "efficiency.png").exists() and list(out.glob("indicators_*.vtk"))
    steps = (out / "adapt_steps.csv").read_text().splitlines()
    assert steps[0] == "n,vertices,estimate,goal,refinements"


def test_mesh_info(tmp_path, capsys):
    assert main(["mesh-info", "--preset", "example2", "--k", "1", "--out", str(tmp_path)]) == 0
    assert "vertices=117" in capsys.readouterr().out
    assert output.read_vtk_counts(tmp_path / "mesh.vtk") == (117, 336)


def test_determinism(tmp_path):
    for d in ("a", "b"):
        assert main(["convergence", "--preset", "example1", "--out", str(tmp_path / d), "--seed", "3"]) == 0
    assert (tmp_path / "a" / "convergence.csv").read_bytes() == (tmp_path / "b" / "convergence.csv").read_bytes()
