"""Problem presets for the four numerical experiments.

Fichera boundary layouts (Dirichlet faces per field, Neumann elsewhere):

* non-creased (examples 2 and 4): Gamma_0 is the re-entrant face x1 = 0,
  Gamma_1 the opposite outer face x1 = -1.  Gamma_0 meets the Neumann
  re-entrant faces x2 = 0 and x3 = 0 at an interior angle of 3 pi / 2.
* creased (example 3): Gamma_0 is the outer face x2 = 1 and Gamma_1 the
  outer face x2 = -1; every Dirichlet/Neumann interface is a convex edge.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import FICHERA_TAGS, UNIT_CUBE_TAGS, BoundaryPartition, Mesh, fichera_mesh, unit_cube_mesh
from .mms import example1_case, example1_literal_gN
from .solver import ProblemData, SigmaModel, TimeGrid

T_FINAL = 0.1

NONCREASED_DIRICHLET = {FICHERA_TAGS["x1=0"], FICHERA_TAGS["x1=-1"]}
CREASED_DIRICHLET = {FICHERA_TAGS["x2=1"], FICHERA_TAGS["x2=-1"]}


@dataclass
class Preset:
    name: str
    geometry: str
    data: ProblemData
    T: float
    exact: object = None  # MmsCase when the exact solution is known

    def mesh(self, k: int) -> Mesh:
        return unit_cube_mesh(k) if self.geometry == "unit_cube" else fichera_mesh(k)

    def grid(self, l: int) -> TimeGrid:
        return TimeGrid(self.T, l)


def unit_cube_normal(x: np.ndarray) -> np.ndarray:
    """Outward normal at boundary points of the unit cube (zero in the interior)."""
    n = np.zeros_like(x)
    for i in range(3):
        n[np.abs(x[:, i]) < 1e-10, i] = -1.0
        n[np.abs(x[:, i] - 1) < 1e-10, i] = 1.0
    return n


def example1(literal_neumann: bool = False) -> Preset:
    case = example1_case()
    mesh = unit_cube_mesh(0)
    d_phi = {UNIT_CUBE_TAGS[k] for k in ("x1=0", "x1=1", "x2=0", "x2=1")}
    if literal_neumann:
        g_N = example1_literal_gN
    else:
        def g_N(x, t):
            return case.sigma(case.u(x, t)) * (case.grad_phi(x) * unit_cube_normal(x)).sum(axis=1)
    data = ProblemData(
        sigma=case.sigma,
        partition_u=BoundaryPartition.from_dirichlet(mesh, "temperature", mesh.tags),
        partition_phi=BoundaryPartition.from_dirichlet(mesh, "potential", d_phi),
        g_u=case.g_u, g_phi=case.g_phi, u0=case.u0, f=case.f, g_N=g_N,
        name="example1-literal" if literal_neumann else "example1",
    )
    return Preset(data.name, "unit_cube", data, case.T, exact=case)


def _fichera_data(dirichlet, g_phi, name) -> ProblemData:
    mesh = fichera_mesh(0)
    return ProblemData(
        sigma=SigmaModel.arctan(),
        partition_u=BoundaryPartition.from_dirichlet(mesh, "temperature", dirichlet),
        partition_phi=BoundaryPartition.from_dirichlet(mesh, "potential", dirichlet),
        g_u=0.0, g_phi=g_phi, u0=0.0, name=name,
    )


def example2() -> Preset:
    # 10 on Gamma_0 (x1 = 0) and 0 on Gamma_1 (x1 = -1), lifted linearly
    def g_phi(x, t):
        return 10.0 * (x[:, 0] + 1.0)

    return Preset("example2", "fichera", _fichera_data(NONCREASED_DIRICHLET, g_phi, "example2"), T_FINAL)


def example3() -> Preset:
    def g_phi(x, t):
        return 2.0 * x[:, 1] * (x[:, 1] + 1.0) + 5.0

    return Preset("example3", "fichera", _fichera_data(CREASED_DIRICHLET, g_phi, "example3"), T_FINAL)


def example4() -> Preset:
    p = example2()
    p.name = p.data.name = "example4"
    return p


PRESETS = {
    "example1": example1,
    "example1-literal": lambda: example1(literal_neumann=True),
    "example2": example2,
    "example3": example3,
    "example4": example4,
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
