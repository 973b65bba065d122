import math

import numpy as np
import pytest

from jouleheat.errors import (ErrorReport, h1_norm, observed_order, reference_compare, simpson,
                              space_time_error)
from jouleheat.mesh import refine_uniform, unit_cube_mesh
from jouleheat.presets import get_preset
from jouleheat.solver import TimeGrid, TransientSolution, run

CUBE1 = unit_cube_mesh(1)


def _traj(mesh, values, T=0.1):
    n = len(values) - 1
    return TransientSolution(list(np.linspace(0, T, n + 1)), list(values), list(values), [], [mesh] * (n + 1),
                             grid=TimeGrid(T, int(math.log2(n))))


def test_h1_norm_oracles():
    m = unit_cube_mesh(2)
    assert h1_norm(m, np.zeros(m.num_vertices)) == 0.0
    x2 = lambda x, t: x[:, 1]  # noqa: E731
    gx2 = lambda x, t: np.tile([0.0, 1.0, 0.0], (len(x), 1))  # noqa: E731
    assert h1_norm(m, None, x2, gx2) ** 2 == pytest.approx(1 / 3 + 1, abs=1e-10)
    assert h1_norm(m, m.vertices[:, 1], x2, gx2) <= 1e-12


def test_simpson_exact_for_cubics():
    a, b = 0.3, 0.7
    p = lambda t: 2 - t + 3 * t ** 2 - 4 * t ** 3  # noqa: E731
    exact = (2 * b - b ** 2 / 2 + b ** 3 - b ** 4) - (2 * a - a ** 2 / 2 + a ** 3 - a ** 4)
    assert simpson(p(a), p(0.5 * (a + b)), p(b), b - a) == pytest.approx(exact, abs=1e-12)


def test_space_time_error_constant_function_is_zero():
    m = CUBE1
    v = 1 + m.vertices[:, 0]
    sol = _traj(m, [v, v, v])
    ex = lambda x, t: 1 + x[:, 0]  # noqa: E731
    gex = lambda x, t: np.tile([1.0, 0, 0], (len(x), 1))  # noqa: E731
    assert space_time_error(sol, ex, gex, relative=False) <= 1e-12


def test_space_time_error_time_only():
    m = CUBE1
    tau = 0.1
    sol = TransientSolution([0.0, tau], [np.zeros(m.num_vertices), np.full(m.num_vertices, tau)], [None, None],
                            [], [m, m])
    ex = lambda x, t: np.full(len(x), t)  # noqa: E731
    gex = lambda x, t: np.zeros((len(x), 3))  # noqa: E731
    err = space_time_error(sol, ex, gex, relative=False)
    assert err ** 2 == pytest.approx(tau ** 3 / 3, rel=1e-12)


def test_space_time_error_norm_properties():
    rng = np.random.default_rng(4)
    m = CUBE1
    n = m.num_vertices
    zero = lambda x, t: np.zeros(len(x))  # noqa: E731
    gzero = lambda x, t: np.zeros((len(x), 3))  # noqa: E731
    a = [rng.standard_normal(n) for _ in range(3)]
    b = [rng.standard_normal(n) for _ in range(3)]
    na = space_time_error(_traj(m, a), zero, gzero, relative=False)
    nb = space_time_error(_traj(m, b), zero, gzero, relative=False)
    nab = space_time_error(_traj(m, [x + y for x, y in zip(a, b)]), zero, gzero, relative=False)
    assert nab <= na + nb + 1e-10
    assert space_time_error(_traj(m, [3 * x for x in a]), zero, gzero, relative=False) == pytest.approx(3 * na)


def test_reference_compare_self_and_linear():
    m = CUBE1
    lin = 1 + m.vertices @ np.array([1.0, -2.0, 0.5])
    sol = _traj(m, [lin, lin, lin])
    assert reference_compare(sol, sol) == 0.0
    fine = refine_uniform(m)
    flin = 1 + fine.vertices @ np.array([1.0, -2.0, 0.5])
    fsol = _traj(fine, [flin] * 5)
    assert reference_compare(sol, fsol, relative=False) <= 1e-12
    bad = _traj(m, [lin] * 4)
    bad.times = [0.0, 0.03, 0.06, 0.1]
    with pytest.raises(ValueError):
        reference_compare(bad, fsol)


def test_reference_compare_example2():
    p = get_preset("example2")
    ref = run(p.data, p.mesh(3), p.grid(3))
    coarse = run(p.data, p.mesh(2), p.grid(2))
    e = reference_compare(coarse, ref)
    assert 0 < e < 1 and math.isfinite(e)


def test_observed_order():
    assert observed_order([0.2, 0.1, 0.05]) == pytest.approx([1.0, 1.0])
    assert observed_order([0.2, 0.2]) == [0.0]
    assert observed_order([0.2, 0.0]) == [math.inf]
    with pytest.raises(ValueError):
        observed_order([0.1])


def test_report_validation_and_csv(tmp_path):
    r = ErrorReport()
    r.add(1, 0.5, 0.05, 27, 0.2, 0.1)
    r.add(2, 0.25, 0.025, 125, 0.1, 0.05)
    with pytest.raises(ValueError):
        r.add(2, 0.1, 0.01, 1, 0.1)
    with pytest.raises(ValueError):
        r.add(3, 0.1, 0.01, 1, -0.1)
    r.write_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_bytes().split(b"\r\n")
    assert lines[0] == b"k,h,tau,dofs,rel_err_u,rel_err_phi,order_u,order_phi"
    assert lines[1].endswith(b",nan,nan")
    assert lines[2].split(b",")[6] == b"1.000000000000e+00"
    r.write_plot_data(tmp_path / "c.dat")
    assert len((tmp_path / "c.dat").read_text().splitlines()) == 3
