"""Continuous P1 spaces and assembly of the matrices and vectors of the scheme."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .linalg import SolverConfig, cg_solve
from .mesh import Mesh
from .quadrature import TET_DEG2, TET_DEG5, TRI_DEG4, QuadratureRule


class AssemblyError(ValueError):
    pass


def evaluate(func, x: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Evaluate a data function ``func(x, t)`` (or a constant) at points ``x`` of shape (..., 3)."""
    if func is None:
        return np.zeros(x.shape[:-1])
    if callable(func):
        flat = x.reshape(-1, 3)
        val = np.asarray(func(flat, t), dtype=float)
        return np.broadcast_to(val, flat.shape[:1]).reshape(x.shape[:-1]).copy()
    return np.full(x.shape[:-1], float(func))


def cell_geometry(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric gradients (C, 4, 3) and volumes (C,)."""
    if "geom" not in mesh._cache:
        p = mesh.vertices[mesh.cells]
        J = np.transpose(p[:, 1:] - p[:, :1], (0, 2, 1))  # columns are edge vectors
        Jinv = np.linalg.inv(J)
        grads = np.empty((mesh.num_cells, 4, 3))
        grads[:, 1:] = Jinv
        grads[:, 0] = -Jinv.sum(axis=1)
        mesh._cache["geom"] = (grads, mesh.volumes())
    return mesh._cache["geom"]


def quadrature_points(mesh: Mesh, rule: QuadratureRule) -> np.ndarray:
    """Physical quadrature points, shape (C, q, 3)."""
    return np.einsum("qi,cid->cqd", rule.points, mesh.vertices[mesh.cells])


def _sparse(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    n = mesh.num_vertices
    rows = np.broadcast_to(mesh.cells[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(mesh.cells[:, None, :], local.shape).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _scatter(mesh: Mesh, local: np.ndarray) -> np.ndarray:
    return np.bincount(mesh.cells.ravel(), weights=local.ravel(), minlength=mesh.num_vertices)


@dataclass(frozen=True, eq=False)
class FeSpace:
    """Continuous P1 space on ``mesh`` with Dirichlet vertices from ``dirichlet_tags``."""

    mesh: Mesh
    dirichlet_tags: frozenset
    field: str = "temperature"

    def __post_init__(self):
        missing = set(self.dirichlet_tags) - self.mesh.tags
        if missing:
            raise AssemblyError(f"Dirichlet tags {sorted(missing)} not present on the mesh")

    @classmethod
    def create(cls, mesh: Mesh, dirichlet_tags, field: str = "temperature") -> "FeSpace":
        return cls(mesh, frozenset(int(t) for t in dirichlet_tags), field)

    @property
    def ndofs(self) -> int:
        return self.mesh.num_vertices

    @property
    def dirichlet_vertices(self) -> np.ndarray:
        key = ("dir", self.dirichlet_tags)
        if key not in self.mesh._cache:
            self.mesh._cache[key] = self.mesh.vertices_on_tags(self.dirichlet_tags)
        return self.mesh._cache[key]

    @property
    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.ndofs, dtype=bool)
        mask[self.dirichlet_vertices] = False
        return mask

    def function(self, coefficients=None) -> "FeFunction":
        if coefficients is None:
            coefficients = np.zeros(self.ndofs)
        return FeFunction(self, np.asarray(coefficients, dtype=float))


@dataclass(eq=False)
class FeFunction:
    space: FeSpace
    coefficients: np.ndarray

    def __post_init__(self):
        if self.coefficients.shape != (self.space.ndofs,):
            raise AssemblyError("coefficient vector does not match the space")
        if not np.all(np.isfinite(self.coefficients)):
            raise AssemblyError("non-finite coefficients")

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    def at_quadrature(self, rule: QuadratureRule) -> np.ndarray:
        return np.einsum("qi,ci->cq", rule.points, self.coefficients[self.mesh.cells])

    def gradients(self) -> np.ndarray:
        grads, _ = cell_geometry(self.mesh)
        return np.einsum("cid,ci->cd", grads, self.coefficients[self.mesh.cells])

    def __call__(self, points: np.ndarray) -> np.ndarray:
        from .mesh import evaluate_p1

        return evaluate_p1(self.mesh, self.coefficients, points)


@dataclass(frozen=True)
class CutoffBounds:
    """Clamp interval [a, b] for the potential; a <= min g_phi, b >= max g_phi."""

    a: float = -np.inf
    b: float = np.inf

    def __post_init__(self):
        if not self.a <= self.b:
            raise AssemblyError(f"invalid cut-off bounds a={self.a} > b={self.b}")

    def check_against(self, g_min: float, g_max: float):
        if self.a > g_min + 1e-14 or self.b < g_max - 1e-14:
            raise AssemblyError(
                f"cut-off bounds [{self.a}, {self.b}] do not contain the Dirichlet range "
                f"[{g_min}, {g_max}]")

    def clamp(self, f_tilde: np.ndarray, g: np.ndarray) -> np.ndarray:
        """min(max(f + g, a), b) - g, pointwise."""
        return np.minimum(np.maximum(f_tilde + g, self.a), self.b) - g

    def active(self, phi: np.ndarray) -> np.ndarray:
        return (phi < self.a) | (phi > self.b)


def assemble_mass(space: FeSpace, rule: QuadratureRule = TET_DEG2) -> sp.csr_matrix:
    mesh = space.mesh
    _, vol = cell_geometry(mesh)
    ref = np.einsum("q,qi,qj->ij", rule.weights, rule.points, rule.points)
    return _sparse(mesh, vol[:, None, None] * ref[None])


def _coefficient_at_quadrature(coeff, mesh: Mesh, rule: QuadratureRule) -> np.ndarray:
    if isinstance(coeff, FeFunction):
        vals = coeff.at_quadrature(rule)
    elif callable(coeff):
        vals = evaluate(coeff, quadrature_points(mesh, rule))
    else:
        vals = np.asarray(coeff, dtype=float)
        if vals.ndim == 0:
            vals = np.full((mesh.num_cells, rule.size), float(vals))
    if not np.all(np.isfinite(vals)):
        raise AssemblyError("non-finite coefficient at a quadrature point")
    return vals


def assemble_stiffness(space: FeSpace, coeff=1.0, rule: QuadratureRule = TET_DEG2) -> sp.csr_matrix:
    """(K_c)_ij = int c grad(l_i) . grad(l_j).

    ``coeff`` is a constant, an FeFunction, a callable ``c(x, t)`` or an
    array of values at the quadrature points (C, q).
    """
    mesh = space.mesh
    grads, vol = cell_geometry(mesh)
    c = _coefficient_at_quadrature(coeff, mesh, rule)
    cbar = c @ rule.weights
    local = (cbar * vol)[:, None, None] * np.einsum("cid,cjd->cij", grads, grads)
    return _sparse(mesh, local)


def sigma_at_quadrature(sigma, u_h: FeFunction, rule: QuadratureRule) -> np.ndarray:
    s = np.asarray(sigma(u_h.at_quadrature(rule)), dtype=float)
    if s.ndim == 0:
        s = np.full((u_h.mesh.num_cells, rule.size), float(s))
    if not np.all(np.isfinite(s)):
        raise AssemblyError("non-finite conductivity at a quadrature point")
    return s


def assemble_joule_rhs(u_h: FeFunction, phi_h: FeFunction, g_phi: FeFunction, sigma,
                       clamp: CutoffBounds, space_u: FeSpace | None = None,
                       rule: QuadratureRule = TET_DEG5, return_activity: bool = False):
    """Cut-off Joule source vector.

    b_i = -int s(u) [phi~] grad(phi).grad(l_i) + int s(u) (grad(phi).grad(g)) l_i,
    where [phi~] = min(max(phi, a), b) - g at each quadrature point.
    """
    if not isinstance(clamp, CutoffBounds):
        raise AssemblyError("clamp must be CutoffBounds")
    if clamp.a > clamp.b:
        raise AssemblyError("invalid cut-off bounds")
    mesh = u_h.mesh
    if phi_h.mesh is not mesh or g_phi.mesh is not mesh:
        raise AssemblyError("functions live on different meshes")
    grads, vol = cell_geometry(mesh)
    s = sigma_at_quadrature(sigma, u_h, rule)
    phi_q = phi_h.at_quadrature(rule)
    g_q = g_phi.at_quadrature(rule)
    cut = clamp.clamp(phi_q - g_q, g_q)
    gphi = phi_h.gradients()
    gg = g_phi.gradients()
    w = rule.weights
    # term 1: -(sum_q w s cut) V grad(phi).grad(l_i)
    c1 = (s * cut) @ w
    t1 = -(c1 * vol)[:, None] * np.einsum("cd,cid->ci", gphi, grads)
    # term 2: V (grad(phi).grad(g)) sum_q w s lambda_i
    dot = np.einsum("cd,cd->c", gphi, gg)
    t2 = (dot * vol)[:, None] * ((s * w) @ rule.points)
    b = _scatter(mesh, t1 + t2)
    if return_activity:
        act = clamp.active(phi_q)
        frac = float((act @ w * vol).sum() / vol.sum())
        return b, frac
    return b


def assemble_load(space: FeSpace, f, t: float = 0.0, rule: QuadratureRule = TET_DEG5) -> np.ndarray:
    mesh = space.mesh
    _, vol = cell_geometry(mesh)
    fq = evaluate(f, quadrature_points(mesh, rule), t)
    if not np.all(np.isfinite(fq)):
        raise AssemblyError("non-finite load at a quadrature point")
    local = (vol[:, None]) * ((fq * rule.weights) @ rule.points)
    return _scatter(mesh, local)


def facet_geometry(mesh: Mesh, facets: np.ndarray):
    p = mesh.vertices[facets]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area = 0.5 * np.linalg.norm(cross, axis=1)
    return p, area


def assemble_neumann(space: FeSpace, g_N, tags, t: float = 0.0,
                     rule: QuadratureRule = TRI_DEG4) -> np.ndarray:
    """Surface load int_{facets with tag in tags} g_N l_i ds."""
    mesh = space.mesh
    tags = set(int(x) for x in tags)
    missing = tags - mesh.tags
    if missing:
        raise AssemblyError(f"Neumann tags {sorted(missing)} not present on the mesh")
    facets = mesh.facets_with_tags(tags)
    if len(facets) == 0:
        return np.zeros(space.ndofs)
    p, area = facet_geometry(mesh, facets)
    xq = np.einsum("qi,fid->fqd", rule.points, p)
    gq = evaluate(g_N, xq, t)
    local = area[:, None] * ((gq * rule.weights) @ rule.points)
    return np.bincount(facets.ravel(), weights=local.ravel(), minlength=space.ndofs)


def interpolate(space: FeSpace, func, t: float = 0.0) -> FeFunction:
    return space.function(evaluate(func, space.mesh.vertices, t))


def apply_dirichlet(A: sp.spmatrix, b: np.ndarray, dofs: np.ndarray, values: np.ndarray):
    """Symmetric elimination: zero rows/columns, unit diagonal, known values moved to the rhs."""
    n = A.shape[0]
    values = np.broadcast_to(np.asarray(values, dtype=float), (len(dofs),))
    g = np.zeros(n)
    g[dofs] = values
    free = np.ones(n)
    free[dofs] = 0.0
    P = sp.diags(free)
    rhs = free * (b - A @ g) + g
    Ad = (P @ A @ P + sp.diags(1.0 - free)).tocsr()
    Ad.eliminate_zeros()
    Ad.sort_indices()
    return Ad, rhs


def l2_project(space: FeSpace, func, t: float = 0.0, config: SolverConfig | None = None,
               rule: QuadratureRule = TET_DEG5) -> FeFunction:
    """Unconstrained L2 projection onto the full P1 space."""
    M = assemble_mass(space)
    if isinstance(func, FeFunction):
        b = M @ func.coefficients
    else:
        b = assemble_load(space, func, t, rule)
    res = cg_solve(M, b, config or SolverConfig(rel_tol=1e-12))
    return space.function(res.x)


def dump_element_matrices(space: FeSpace, path, cells=None):
    """Write local mass and stiffness matrices as CSV rows (cell, kind, i, j, value)."""
    import csv

    grads, vol = cell_geometry(space.mesh)
    cells = range(space.mesh.num_cells) if cells is None else cells
    ref = np.einsum("q,qi,qj->ij", TET_DEG2.weights, TET_DEG2.points, TET_DEG2.points)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "kind", "i", "j", "value"])
        for c in cells:
            Mloc = vol[c] * ref
            Kloc = vol[c] * grads[c] @ grads[c].T
            for kind, loc in (("mass", Mloc), ("stiffness", Kloc)):
                for i in range(4):
                    for j in range(4):
                        w.writerow([c, kind, i, j, repr(float(loc[i, j]))])
