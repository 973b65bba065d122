"""Goal-oriented (dual weighted residual) mesh adaptivity for each time step.

Per step the stationary problem F((u, phi), (v, w)) = 0 is linearized at the
computed discrete state, the adjoint system F'(u_h)^T z = M is solved, and
the residual is weighted by z* - I_h z*, where z* is the dual solution
enhanced by a recovered gradient.  The residual splits into cell and facet
contributions; the divergence of the flux in the cell residual is integrated
through the divergence theorem so the local pieces add up to the assembled
residual functional exactly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .fem import FeFunction, cell_geometry, quadrature_points
from .mesh import _LOCAL_EDGES, _LOCAL_FACES, Mesh, MeshResourceError, prolongate, refine_marked, \
    refine_uniform
from .quadrature import TET_DEG2, TET_DEG5, TRI_DEG4
from .solver import (Discretization, FixedPointConfig, ProblemData, TimeGrid, TransientSolution,
                     project_initial, solve_potential, step)

log = logging.getLogger(__name__)

# rules matching the assembly used by the solver
HEAT_RULE = TET_DEG5
POTENTIAL_RULE = TET_DEG2
FACET_RULE = TRI_DEG4


@dataclass(frozen=True)
class GoalFunctional:
    """M(u) = weight * int_Omega u dx."""

    kind: str = "domain_integral_of_u"
    weight: float = 1.0

    def __post_init__(self):
        if self.kind != "domain_integral_of_u":
            raise ValueError(f"unknown goal functional {self.kind!r}")

    def vector(self, disc: Discretization) -> np.ndarray:
        return self.weight * (disc.M @ np.ones(disc.mesh.num_vertices))

    def __call__(self, disc: Discretization, u: np.ndarray) -> float:
        return float(self.vector(disc) @ u)


@dataclass
class ErrorIndicators:
    eta: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.eta)) or np.any(self.eta < 0):
            raise ValueError("indicators must be finite and nonnegative")

    @property
    def total(self) -> float:
        return float(self.eta.sum())


@dataclass(frozen=True)
class AdaptConfig:
    theta: float = 0.5
    max_vertices: int = 20000
    tol: float = math.inf
    max_refinements_per_step: int = 8
    dual_weight: str = "recovery"  # or "refined"

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError("Dorfler fraction must lie in (0, 1]")
        if self.dual_weight not in ("recovery", "refined"):
            raise ValueError(f"unknown dual weight {self.dual_weight!r}")


@dataclass
class StepState:
    """Everything the residual of one time step depends on."""

    disc: Discretization
    u: np.ndarray
    phi: np.ndarray
    u_prev: np.ndarray
    t: float
    tau: float
    clamp: fem.CutoffBounds

    @property
    def mesh(self) -> Mesh:
        return self.disc.mesh


# ---------------------------------------------------------------- P2 test functions

@dataclass
class P2Field:
    """Continuous piecewise quadratic given by vertex and edge-midpoint values."""

    mesh: Mesh
    vertex: np.ndarray
    edge: np.ndarray

    @classmethod
    def from_p1(cls, mesh: Mesh, values) -> "P2Field":
        values = np.asarray(values, dtype=float)
        edges, _ = mesh.edges()
        return cls(mesh, values, 0.5 * (values[edges[:, 0]] + values[edges[:, 1]]))

    def cell_values(self, bary: np.ndarray):
        """Values (C, q) and gradients (C, q, 3) at barycentric points of every cell."""
        grads, _ = cell_geometry(self.mesh)
        _, cell_edges = self.mesh.edges()
        vv = self.vertex[self.mesh.cells]  # (C, 4)
        ev = self.edge[cell_edges]  # (C, 6)
        lam = bary  # (q, 4)
        i, j = _LOCAL_EDGES[:, 0], _LOCAL_EDGES[:, 1]
        phi_v = lam * (2 * lam - 1)  # (q, 4)
        phi_e = 4 * lam[:, i] * lam[:, j]  # (q, 6)
        val = vv @ phi_v.T + ev @ phi_e.T
        # gradients: (4 l_i - 1) grad l_i and 4 (l_j grad l_i + l_i grad l_j)
        gv = np.einsum("ci,qi,cid->cqd", vv, 4 * lam - 1, grads)
        ge = 4 * (np.einsum("ce,qe,ced->cqd", ev, lam[:, j], grads[:, i])
                  + np.einsum("ce,qe,ced->cqd", ev, lam[:, i], grads[:, j]))
        return val, gv + ge

    def face_values(self, faces: np.ndarray, face_edge_ids: np.ndarray, bary: np.ndarray):
        """Values (F, q) at barycentric points of faces (vertex triples)."""
        vv = self.vertex[faces]
        ev = self.edge[face_edge_ids]  # edges (0,1), (1,2), (0,2)
        lam = bary
        phi_v = lam * (2 * lam - 1)
        phi_e = np.stack([4 * lam[:, 0] * lam[:, 1], 4 * lam[:, 1] * lam[:, 2],
                          4 * lam[:, 0] * lam[:, 2]], axis=1)
        return vv @ phi_v.T + ev @ phi_e.T


def _edge_lookup(mesh: Mesh, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    edges, _ = mesh.edges()
    n = mesh.num_vertices
    keys = edges[:, 0] * n + edges[:, 1]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    idx = np.searchsorted(keys, lo * n + hi)
    if np.any(keys[np.clip(idx, 0, len(keys) - 1)] != lo * n + hi):
        raise KeyError("edge not in mesh")
    return idx


def _face_topology(mesh: Mesh):
    """Faces, their neighbouring cells (second = -1 on the boundary) and outward normals."""
    if "face_topo" in mesh._cache:
        return mesh._cache["face_topo"]
    faces, cell_faces = mesh.faces()
    nf = len(faces)
    owner = -np.ones((nf, 2), dtype=np.int64)
    local = -np.ones((nf, 2), dtype=np.int64)
    flat = cell_faces.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_faces = flat[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_faces[1:] != sorted_faces[:-1]
    slot = np.where(first, 0, 1)
    cells_of = order // 4
    loc_of = order % 4
    owner[sorted_faces, slot] = cells_of
    local[sorted_faces, slot] = loc_of
    p = mesh.vertices[faces]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area = 0.5 * np.linalg.norm(cross, axis=1)
    normal = cross / (2 * area[:, None])
    # orient away from the first owner
    opp = mesh.vertices[mesh.cells[owner[:, 0], local[:, 0]]]
    sign = np.sign(((p[:, 0] - opp) * normal).sum(axis=1))
    normal *= sign[:, None]
    fe = np.stack([_edge_lookup(mesh, faces[:, 0], faces[:, 1]),
                   _edge_lookup(mesh, faces[:, 1], faces[:, 2]),
                   _edge_lookup(mesh, faces[:, 0], faces[:, 2])], axis=1)
    # boundary tags by face
    tag = np.zeros(nf, dtype=int)
    n = mesh.num_vertices
    fkey = (faces[:, 0] * n + faces[:, 1]) * n + faces[:, 2]
    sf = np.sort(mesh.facets, axis=1)
    tkey = (sf[:, 0] * n + sf[:, 1]) * n + sf[:, 2]
    o = np.argsort(fkey)
    pos = o[np.searchsorted(fkey[o], tkey)]
    tag[pos] = mesh.facet_tags
    topo = (faces, owner, normal, area, fe, tag)
    mesh._cache["face_topo"] = topo
    return topo


# ---------------------------------------------------------------- residual pieces

def _primal_at(state: StepState, bary: np.ndarray):
    """u, phi, g_phi, u_prev at cell quadrature points plus cell gradients."""
    mesh = state.mesh
    cells = mesh.cells
    gphi = state.disc.g_phi(state.t).coefficients
    vals = {}
    for name, vec in (("u", state.u), ("phi", state.phi), ("g", gphi), ("up", state.u_prev)):
        vals[name] = vec[cells] @ bary.T
    grads, _ = cell_geometry(mesh)
    for name, vec in (("u", state.u), ("phi", state.phi), ("g", gphi)):
        vals["d" + name] = np.einsum("cid,ci->cd", grads, vec[cells])
    return vals, gphi


def heat_flux(state: StepState, u, phi, g, du, dphi):
    """Phi_u = grad u + s(u) [phi~] grad phi at given points."""
    s = state.disc.data.sigma(u)
    cut = state.clamp.clamp(phi - g, g)
    return du + (s * cut)[..., None] * dphi


def residual_terms(state: StepState, v: P2Field, w: P2Field):
    """Per-cell cell and facet parts of r((v, w)) = -F((u_h, phi_h), (v, w))."""
    mesh = state.mesh
    data = state.disc.data
    _, vol = cell_geometry(mesh)
    sigma = data.sigma

    # heat equation, cell part: -(int (u - u_prev)/tau - s2 - f) v - int Phi_u . grad v
    rule = HEAT_RULE
    P, gphi = _primal_at(state, rule.points)
    v_val, v_grad = v.cell_values(rule.points)
    s = sigma(P["u"])
    flux_u = heat_flux(state, P["u"], P["phi"], P["g"], P["du"][:, None], P["dphi"][:, None])
    s2 = s * np.einsum("cd,cd->c", P["dphi"], P["dg"])[:, None]
    src = (P["u"] - P["up"]) / state.tau - s2
    if data.f is not None:
        src = src - fem.evaluate(data.f, quadrature_points(mesh, rule), state.t)
    dens = -(src * v_val) - np.einsum("cqd,cqd->cq", flux_u, v_grad)
    weak_u = vol * (dens @ rule.weights)

    # potential, cell part: -int Phi_phi . grad w
    rule = POTENTIAL_RULE
    Pq, _ = _primal_at(state, rule.points)
    w_val, w_grad = w.cell_values(rule.points)
    flux_p = sigma(Pq["u"])[..., None] * Pq["dphi"][:, None]
    weak_p = vol * (-np.einsum("cqd,cqd->cq", flux_p, w_grad) @ rule.weights)

    # facets
    faces, owner, normal, area, fe, tag = _face_topology(mesh)
    lam = FACET_RULE.points
    fw = FACET_RULE.weights
    uf = state.u[faces] @ lam.T
    pf = state.phi[faces] @ lam.T
    gf = gphi[faces] @ lam.T
    sf = sigma(uf)
    vf = v.face_values(faces, fe, lam)
    wf = w.face_values(faces, fe, lam)
    grads, _ = cell_geometry(mesh)

    def cell_grad(vec, c):
        return np.einsum("fid,fi->fd", grads[c], vec[mesh.cells[c]])

    def side_flux(c):
        du = cell_grad(state.u, c)
        dp = cell_grad(state.phi, c)
        fu = heat_flux(state, uf, pf, gf, du[:, None], dp[:, None])
        fp = sf[..., None] * dp[:, None]
        return np.einsum("fqd,fd->fq", fu, normal), np.einsum("fqd,fd->fq", fp, normal)

    c0, c1 = owner[:, 0], owner[:, 1]
    interior = c1 >= 0
    fu0, fp0 = side_flux(c0)
    fu1 = np.zeros_like(fu0)
    fp1 = np.zeros_like(fp0)
    if interior.any():
        a, b = side_flux(np.where(interior, c1, c0))
        fu1[interior], fp1[interior] = a[interior], b[interior]

    # jump [Phi . n] with n pointing out of owner 0
    jump_u = np.where(interior[:, None], fu0 - fu1, 0.0)
    jump_p = np.where(interior[:, None], fp0 - fp1, 0.0)
    # boundary mismatch: flux minus Neumann datum (heat datum is zero)
    datum = np.zeros_like(fp0)
    if data.g_N is not None:
        on_n = np.isin(tag, list(data.partition_phi.neumann_tags)) & ~interior
        if on_n.any():
            xq = np.einsum("qi,fid->fqd", lam, mesh.vertices[faces[on_n]])
            datum[on_n] = fem.evaluate(data.g_N, xq, state.t)

    def integrate(f):
        return area * (f @ fw)

    # divergence part of the cell residual: int_dT Phi_T . n_T test
    div_u0 = integrate(fu0 * vf)
    div_u1 = integrate(-fu1 * vf)
    div_p0 = integrate(fp0 * wf)
    div_p1 = integrate(-fp1 * wf)
    # facet residual R_dT: -1/2 [Phi . n] inside, datum - Phi . n on the boundary
    half_u = integrate(-0.5 * jump_u * vf)
    half_p = integrate(-0.5 * jump_p * wf)
    bnd_u = integrate(np.where(interior[:, None], 0.0, -fu0) * vf)
    bnd_p = integrate(np.where(interior[:, None], 0.0, datum - fp0) * wf)

    nc = mesh.num_cells
    cell_part = weak_u + weak_p
    cell_part += np.bincount(c0, weights=div_u0 + div_p0, minlength=nc)
    cell_part += np.bincount(c1[interior], weights=(div_u1 + div_p1)[interior], minlength=nc)
    facet_part = np.bincount(c0, weights=half_u + half_p + bnd_u + bnd_p, minlength=nc)
    facet_part += np.bincount(c1[interior], weights=(half_u + half_p)[interior], minlength=nc)
    return cell_part, facet_part


def local_residuals(state: StepState, v: P2Field, w: P2Field) -> np.ndarray:
    cell_part, facet_part = residual_terms(state, v, w)
    return cell_part + facet_part


def global_residual(state: StepState, v: np.ndarray, w: np.ndarray) -> float:
    """r((v, w)) for P1 test functions from the assembled vectors."""
    disc = state.disc
    data = disc.data
    t = state.t
    u_fun = disc.space_u.function(state.u)
    phi_fun = disc.space_phi.function(state.phi)
    gphi = disc.g_phi(t)
    joule = fem.assemble_joule_rhs(u_fun, phi_fun, gphi, data.sigma, state.clamp, rule=HEAT_RULE)
    Fu = disc.M @ (state.u - state.u_prev) / state.tau + disc.K @ state.u - joule - disc.load(t)
    Ks = fem.assemble_stiffness(disc.space_phi, fem.sigma_at_quadrature(data.sigma, u_fun, POTENTIAL_RULE),
                                rule=POTENTIAL_RULE)
    Fp = Ks @ state.phi - disc.neumann_phi(t)
    return -float(Fu @ v + Fp @ w)


# ---------------------------------------------------------------- dual problem

def jacobian(state: StepState) -> sp.csr_matrix:
    """Derivative of F with respect to (u, phi) at the discrete state, rows are test functions."""
    mesh = state.mesh
    data = state.disc.data
    sigma = data.sigma
    grads, vol = cell_geometry(mesh)
    n = mesh.num_vertices

    rule = HEAT_RULE
    P, _ = _primal_at(state, rule.points)
    lam = rule.points
    w = rule.weights
    s = sigma(P["u"])
    ds = sigma.d(P["u"])
    cut = state.clamp.clamp(P["phi"] - P["g"], P["g"])
    inside = ((P["phi"] > state.clamp.a) & (P["phi"] < state.clamp.b)).astype(float)
    dphi_dl = np.einsum("cd,cid->ci", P["dphi"], grads)  # grad phi . grad l_i
    dg_dl = np.einsum("cd,cid->ci", P["dg"], grads)
    dphi_dg = np.einsum("cd,cd->c", P["dphi"], P["dg"])
    # d/du: s'(u) l_j [cut grad phi . grad l_i - (grad phi . grad g) l_i]
    a = (ds * cut * w) @ lam  # (C, 4) over j
    b = np.einsum("cq,qi,qj->cij", ds * w, lam, lam) * dphi_dg[:, None, None]
    Juu = vol[:, None, None] * (dphi_dl[:, :, None] * a[:, None, :] - b)
    # d/dphi: s chi l_j grad phi.grad l_i + s cut grad l_j.grad l_i - s (grad l_j . grad g) l_i
    a2 = (s * inside * w) @ lam
    c2 = (s * cut) @ w
    GG = np.einsum("cid,cjd->cij", grads, grads)
    e2 = (s * w) @ lam  # (C, 4) over i
    Jup = vol[:, None, None] * (dphi_dl[:, :, None] * a2[:, None, :] + c2[:, None, None] * GG
                                - e2[:, :, None] * dg_dl[:, None, :])
    # potential rows
    rule = POTENTIAL_RULE
    Pq, _ = _primal_at(state, rule.points)
    dsq = sigma.d(Pq["u"])
    sq = sigma(Pq["u"])
    dphi_dl_q = np.einsum("cd,cid->ci", Pq["dphi"], grads)
    a3 = (dsq * rule.weights) @ rule.points
    Jpu = vol[:, None, None] * dphi_dl_q[:, :, None] * a3[:, None, :]
    Jpp = (vol * (sq @ rule.weights))[:, None, None] * GG

    def block(local):
        return fem._sparse(mesh, local)

    heat = (state.disc.M / state.tau + state.disc.K).tocsr()
    J = sp.bmat([[heat + block(Juu), block(Jup)], [block(Jpu), block(Jpp)]], format="csr")
    return J


def solve_dual(state: StepState, goal: GoalFunctional):
    """Solve F'(u_h)^T z = M with z = 0 on the Dirichlet vertices of each field."""
    disc = state.disc
    n = state.mesh.num_vertices
    J = jacobian(state)
    rhs = np.concatenate([goal.vector(disc), np.zeros(n)])
    fixed = np.concatenate([disc.space_u.dirichlet_vertices, n + disc.space_phi.dirichlet_vertices])
    free = np.ones(2 * n, dtype=bool)
    free[fixed] = False
    JT = J.T.tocsr()[free][:, free]
    z = np.zeros(2 * n)
    if np.any(rhs[free]):
        z[free] = spla.spsolve(JT.tocsc(), rhs[free])
        res = np.linalg.norm(JT @ z[free] - rhs[free])
        if not np.isfinite(res) or res > 1e-8 * max(np.linalg.norm(rhs[free]), 1e-300):
            raise RuntimeError(f"dual solve failed, residual {res:.3e}")
    return z[:n], z[n:]


def recovered_gradient(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Volume-weighted average of cell gradients at each vertex."""
    grads, vol = cell_geometry(mesh)
    g = np.einsum("cid,ci->cd", grads, values[mesh.cells])
    out = np.zeros((mesh.num_vertices, 3))
    wsum = np.bincount(mesh.cells.ravel(), weights=np.repeat(vol, 4), minlength=mesh.num_vertices)
    for d in range(3):
        out[:, d] = np.bincount(mesh.cells.ravel(), weights=np.repeat(vol * g[:, d], 4),
                                minlength=mesh.num_vertices)
    return out / wsum[:, None]


def dual_weight(mesh: Mesh, z: np.ndarray, dirichlet: np.ndarray) -> P2Field:
    """z* - I_h z* for the quadratic z* with end slopes from the recovered gradient."""
    edges, _ = mesh.edges()
    G = recovered_gradient(mesh, z)
    a, b = edges[:, 0], edges[:, 1]
    d = mesh.vertices[b] - mesh.vertices[a]
    corr = -((G[b] - G[a]) * d).sum(axis=1) / 8.0
    on_d = np.zeros(mesh.num_vertices, dtype=bool)
    on_d[dirichlet] = True
    corr[on_d[a] & on_d[b]] = 0.0
    return P2Field(mesh, np.zeros(mesh.num_vertices), corr)


def refined_dual_weight(state: StepState, goal: GoalFunctional):
    """Dual weights from a dual solve on the uniformly refined mesh."""
    fine = refine_uniform(state.mesh)
    disc_f = Discretization(fine, state.disc.data)
    fs = StepState(disc_f, prolongate(fine, state.u), prolongate(fine, state.phi),
                   prolongate(fine, state.u_prev), state.t, state.tau, state.clamp)
    zu, zp = solve_dual(fs, goal)
    nv = state.mesh.num_vertices
    out = []
    for z in (zu, zp):
        vert = z[:nv]
        edges, _ = state.mesh.edges()
        mid = z[nv:] - 0.5 * (vert[edges[:, 0]] + vert[edges[:, 1]])
        out.append(P2Field(state.mesh, np.zeros(nv), mid))
    return out


def compute_indicators(state: StepState, z_u: np.ndarray, z_phi: np.ndarray,
                       weights=None) -> ErrorIndicators:
    """eta_T = |r_T(z* - I_h z*)| summed over both equations."""
    mesh = state.mesh
    if weights is None:
        wu = dual_weight(mesh, z_u, state.disc.space_u.dirichlet_vertices)
        wp = dual_weight(mesh, z_phi, state.disc.space_phi.dirichlet_vertices)
    else:
        wu, wp = weights
    r = local_residuals(state, wu, wp)
    return ErrorIndicators(np.abs(r))


def mark_dorfler(indicators: ErrorIndicators | np.ndarray, theta: float) -> np.ndarray:
    """Smallest set of largest indicators carrying a fraction theta of the total."""
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    eta = indicators.eta if isinstance(indicators, ErrorIndicators) else np.asarray(indicators)
    order = np.argsort(-eta, kind="stable")
    csum = np.cumsum(eta[order])
    total = csum[-1] if len(csum) else 0.0
    if total <= 0:
        return np.zeros(0, dtype=np.int64)
    count = int(np.searchsorted(csum, theta * total, side="left")) + 1
    return np.sort(order[:min(count, len(eta))])


# ---------------------------------------------------------------- driver

@dataclass
class AdaptRecord:
    n: int
    vertices: int
    estimate: float
    goal: float
    refinements: int


@dataclass
class AdaptResult:
    solution: TransientSolution
    meshes: list
    goal_trace: list
    records: list = field(default_factory=list)
    indicators: list = field(default_factory=list)  # final eta of each step, None without estimation
    cap_reached: bool = False


def adapt_run(data: ProblemData, mesh: Mesh, grid: TimeGrid, goal: GoalFunctional | None = None,
              config: AdaptConfig | None = None, fp: FixedPointConfig | None = None) -> AdaptResult:
    """Backward Euler with per-step solve-estimate-mark-refine cycles; meshes are only refined."""
    goal = goal or GoalFunctional()
    config = config or AdaptConfig()
    fp = fp or FixedPointConfig()
    disc = Discretization(mesh, data)
    clamp = data.cutoff(mesh, grid.points)
    u0 = project_initial(data, disc, fp.linear)
    phi0 = solve_potential(u0, 0.0, disc, fp.linear)
    sol = TransientSolution([0.0], [u0.coefficients], [phi0.coefficients], [], [mesh],
                            grid=grid, clamp=clamp)
    result = AdaptResult(sol, [mesh], [goal(disc, u0.coefficients)])
    u_prev = u0.coefficients
    for n in range(1, grid.num_steps + 1):
        refinements = 0
        ind = None
        while True:
            u_n, phi_n, diag = step(u_prev, n, grid, disc, clamp, fp)
            if math.isinf(config.tol):
                estimate = float("nan")
                break
            state = StepState(disc, u_n, phi_n, u_prev, diag.t, grid.tau, clamp)
            if config.dual_weight == "refined":
                weights = refined_dual_weight(state, goal)
                ind = compute_indicators(state, None, None, weights)
            else:
                z_u, z_p = solve_dual(state, goal)
                ind = compute_indicators(state, z_u, z_p)
            estimate = ind.total
            log.info("step %d: %d vertices, estimate %.3e", n, disc.mesh.num_vertices, estimate)
            if estimate <= config.tol or result.cap_reached or \
                    refinements >= config.max_refinements_per_step:
                break
            marked = mark_dorfler(ind, config.theta)
            try:
                new_mesh = refine_marked(disc.mesh, marked, limit=config.max_vertices)
            except MeshResourceError:
                new_mesh = None
            if new_mesh is None or new_mesh.num_vertices > config.max_vertices:
                result.cap_reached = True
                log.warning("vertex cap %d reached at step %d", config.max_vertices, n)
                break
            u_prev = prolongate(new_mesh, u_prev)
            disc = Discretization(new_mesh, data)
            clamp = _widen(clamp, data.cutoff(new_mesh, grid.points))
            refinements += 1
        sol.times.append(diag.t)
        sol.u.append(u_n)
        sol.phi.append(phi_n)
        sol.diagnostics.append(diag)
        sol.meshes.append(disc.mesh)
        result.meshes.append(disc.mesh)
        result.goal_trace.append(goal(disc, u_n))
        result.indicators.append(None if ind is None else ind.eta)
        result.records.append(AdaptRecord(n, disc.mesh.num_vertices, estimate,
                                          result.goal_trace[-1], refinements))
        u_prev = u_n
    return result


def _widen(a: fem.CutoffBounds, b: fem.CutoffBounds) -> fem.CutoffBounds:
    return fem.CutoffBounds(min(a.a, b.a), max(a.b, b.b))


def goal_error(trace, reference_trace) -> float:
    """max_n |M(u^n) - M(u^n_ref)| / max_n |M(u^n_ref)|."""
    trace = np.asarray(trace)
    ref = np.asarray(reference_trace)
    if trace.shape != ref.shape:
        raise ValueError("goal traces on different time grids")
    return float(np.abs(trace - ref).max() / np.abs(ref).max())
