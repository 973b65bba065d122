"""Backward Euler scheme for the Joule heating system with a Picard iteration per step.

Each time step solves

    <(u^n - u^{n-1})/tau, v> + <grad u^n, grad v>
        = -<s(u^n) [phi~^n] grad phi^n, grad v> + <s(u^n) grad phi^n . grad g_phi, v> + <f, v>
    <s(u^n) grad phi^n, grad w> = <g_N, w>_{Gamma_N}

for the full nodal vectors u^n = g_u + u~^n, phi^n = g_phi + phi~^n.  The
nonlinearity is resolved by the map gamma -> beta with
(M + tau K) beta = M u^{n-1} + tau F(gamma) + tau f, which is a contraction
for small tau.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fem
from .fem import CutoffBounds, FeFunction, FeSpace
from .linalg import SolverConfig, SolverError, cg_solve
from .mesh import BoundaryPartition, Mesh

log = logging.getLogger(__name__)


class FixedPointError(RuntimeError):
    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class ModelViolation(ValueError):
    pass


@dataclass(frozen=True)
class SigmaModel:
    """Conductivity s(u) with bounds s_lo <= s <= s_hi and Lipschitz constant."""

    func: Callable
    lower: float
    upper: float
    lipschitz: float
    derivative: Callable | None = None
    name: str = "custom"
    is_constant: bool = False

    def __call__(self, u):
        return self.func(np.asarray(u, dtype=float))

    def d(self, u):
        if self.derivative is None:
            u = np.asarray(u, dtype=float)
            eps = 1e-7 * np.maximum(1.0, np.abs(u))
            return (self(u + eps) - self(u - eps)) / (2 * eps)
        return self.derivative(np.asarray(u, dtype=float))

    @classmethod
    def constant(cls, value: float = 1.0) -> "SigmaModel":
        value = float(value)
        return cls(lambda u: np.full(np.shape(u), value), value, value, 0.0,
                   lambda u: np.zeros(np.shape(u)), name=f"constant({value})", is_constant=True)

    @classmethod
    def arctan(cls) -> "SigmaModel":
        # (pi - arctan u)/2 takes values in (pi/4, 3pi/4)
        return cls(lambda u: 0.5 * (np.pi - np.arctan(u)), np.pi / 4, 3 * np.pi / 4, 0.5,
                   lambda u: -0.5 / (1.0 + u * u), name="arctan")

    @classmethod
    def tabulated(cls, u_nodes, s_nodes) -> "SigmaModel":
        """Piecewise linear through the table, constant extrapolation."""
        un = np.asarray(u_nodes, dtype=float)
        sn = np.asarray(s_nodes, dtype=float)
        if np.any(np.diff(un) <= 0):
            raise ValueError("table abscissae must increase")
        slopes = np.diff(sn) / np.diff(un)

        def deriv(u):
            idx = np.clip(np.searchsorted(un, u) - 1, 0, len(slopes) - 1)
            inside = (u > un[0]) & (u < un[-1])
            return np.where(inside, slopes[idx], 0.0)

        return cls(lambda u: np.interp(u, un, sn), float(sn.min()), float(sn.max()),
                   float(np.abs(slopes).max()), deriv, name="tabulated")

    def audit(self, radius: float = 100.0, samples: int = 2001, tol: float = 1e-12):
        """Sampled check of the bounds and the Lipschitz constant on [-radius, radius]."""
        if not 0 < self.lower <= self.upper:
            raise ModelViolation("need 0 < lower <= upper")
        x = np.linspace(-radius, radius, samples)
        s = self(x)
        if s.min() < self.lower - tol or s.max() > self.upper + tol:
            raise ModelViolation(f"sigma leaves [{self.lower}, {self.upper}]")
        slopes = np.abs(np.diff(s) / np.diff(x))
        if slopes.max() > self.lipschitz * (1 + 1e-9) + tol:
            raise ModelViolation(f"Lipschitz constant {self.lipschitz} violated")


@dataclass(frozen=True)
class TimeGrid:
    T: float
    level: int

    def __post_init__(self):
        if self.T <= 0 or self.level < 0:
            raise ValueError("need T > 0 and level >= 0")

    @property
    def num_steps(self) -> int:
        return 2 ** self.level

    @property
    def tau(self) -> float:
        return self.T / self.num_steps

    @property
    def points(self) -> np.ndarray:
        return self.tau * np.arange(self.num_steps + 1)

    def t(self, n: int) -> float:
        return n * self.tau


@dataclass
class ProblemData:
    """Data of the Joule heating problem; functions are ``f(x, t)`` with x of shape (n, 3)."""

    sigma: SigmaModel
    partition_u: BoundaryPartition
    partition_phi: BoundaryPartition
    g_u: Callable | float = 0.0
    g_phi: Callable | float = 0.0
    u0: Callable | float = 0.0
    f: Callable | float | None = None
    g_N: Callable | float | None = None
    clamp: CutoffBounds | None = None
    name: str = "custom"

    def validate(self, mesh: Mesh):
        self.partition_u.validate(mesh)
        self.partition_phi.validate(mesh)

    def dirichlet_range(self, mesh: Mesh, times) -> tuple[float, float]:
        verts = mesh.vertices[mesh.vertices_on_tags(self.partition_phi.dirichlet_tags)]
        vals = np.concatenate([fem.evaluate(self.g_phi, verts, t) for t in times])
        if not np.all(np.isfinite(vals)):
            raise ModelViolation("g_phi is not finite on the Dirichlet vertices")
        return float(vals.min()), float(vals.max())

    def cutoff(self, mesh: Mesh, times) -> CutoffBounds:
        lo, hi = self.dirichlet_range(mesh, times)
        if self.clamp is None:
            return CutoffBounds(lo, hi)
        self.clamp.check_against(lo, hi)
        return self.clamp


@dataclass(frozen=True)
class FixedPointConfig:
    tol: float = 1e-10
    max_iter: int = 50
    eps: float = 1e-30
    detect_constant_map: bool = True
    linear: SolverConfig = field(default_factory=lambda: SolverConfig(rel_tol=1e-12))


@dataclass
class StepDiagnostics:
    n: int
    t: float
    fp_iters: int
    updates: list
    contraction: float
    energy_residual: float
    grad_phi_norm: float
    grad_phi_bound: float
    clamp_active_fraction: float
    linear_residual: float
    cg_iters: int

    def row(self) -> dict:
        return {
            "n": self.n, "t": self.t, "fp_iters": self.fp_iters,
            "energy_residual": self.energy_residual, "grad_phi_norm": self.grad_phi_norm,
            "clamp_active_fraction": self.clamp_active_fraction,
        }


@dataclass
class TransientSolution:
    times: list
    u: list
    phi: list
    diagnostics: list
    meshes: list
    grid: TimeGrid | None = None
    clamp: CutoffBounds | None = None

    @property
    def mesh(self) -> Mesh:
        return self.meshes[-1]

    def u_function(self, n: int, partition: BoundaryPartition) -> FeFunction:
        return FeSpace.create(self.meshes[n], partition.dirichlet_tags).function(self.u[n])


class Discretization:
    """Spaces and the constant matrices of one mesh, reused across steps."""

    def __init__(self, mesh: Mesh, data: ProblemData):
        data.validate(mesh)
        self.mesh = mesh
        self.data = data
        self.space_u = FeSpace.create(mesh, data.partition_u.dirichlet_tags, "temperature")
        self.space_phi = FeSpace.create(mesh, data.partition_phi.dirichlet_tags, "potential")
        self.M = fem.assemble_mass(self.space_u)
        self.K = fem.assemble_stiffness(self.space_u)
        self._heat_cache: dict = {}

    def heat_matrix(self, tau: float):
        if tau not in self._heat_cache:
            self._heat_cache = {tau: (self.M + tau * self.K).tocsr()}
        return self._heat_cache[tau]

    def g_u(self, t: float) -> np.ndarray:
        return fem.evaluate(self.data.g_u, self.mesh.vertices, t)

    def g_phi(self, t: float) -> FeFunction:
        return fem.interpolate(self.space_phi, self.data.g_phi, t)

    def neumann_phi(self, t: float) -> np.ndarray:
        tags = self.data.partition_phi.neumann_tags
        if self.data.g_N is None or not tags:
            return np.zeros(self.mesh.num_vertices)
        return fem.assemble_neumann(self.space_phi, self.data.g_N, tags, t)

    def load(self, t: float) -> np.ndarray:
        if self.data.f is None:
            return np.zeros(self.mesh.num_vertices)
        return fem.assemble_load(self.space_u, self.data.f, t)


def project_initial(data: ProblemData, disc: Discretization, config: SolverConfig | None = None):
    """u^0 = I g_u(0) + u~^0 with <u~^0, z> = <u0 - I g_u(0), z> for all z vanishing on Gamma_D."""
    space = disc.space_u
    g0 = disc.g_u(0.0)
    b = fem.assemble_load(space, data.u0, 0.0) - disc.M @ g0
    free = space.free_mask
    dofs = space.dirichlet_vertices
    A, rhs = fem.apply_dirichlet(disc.M, b, dofs, np.zeros(len(dofs)))
    res = cg_solve(A, rhs, config or SolverConfig(rel_tol=1e-12))
    u = g0 + np.where(free, res.x, 0.0)
    return space.function(u)


def solve_potential(u_guess: FeFunction, t: float, disc: Discretization,
                    config: SolverConfig | None = None, x0=None) -> FeFunction:
    """phi = g_phi at Dirichlet vertices, <s(u) grad phi, grad w> = <g_N, w> otherwise."""
    sigma = disc.data.sigma
    s_q = fem.sigma_at_quadrature(sigma, u_guess, fem.TET_DEG2)
    if s_q.min() < sigma.lower * (1 - 1e-12):
        raise ModelViolation(f"sigma = {s_q.min()} below its lower bound {sigma.lower}")
    K = fem.assemble_stiffness(disc.space_phi, s_q)
    b = disc.neumann_phi(t)
    dofs = disc.space_phi.dirichlet_vertices
    g = fem.evaluate(disc.data.g_phi, disc.mesh.vertices[dofs], t)
    A, rhs = fem.apply_dirichlet(K, b, dofs, g)
    res = cg_solve(A, rhs, config or SolverConfig(rel_tol=1e-12), x0=x0)
    phi = disc.space_phi.function(res.x)
    phi.solve_info = (res.iterations, res.residual)
    return phi


def joule_vector(u: FeFunction, phi: FeFunction, gphi: FeFunction, disc: Discretization,
                 clamp: CutoffBounds, return_activity=False):
    return fem.assemble_joule_rhs(u, phi, gphi, disc.data.sigma, clamp, disc.space_u,
                                  return_activity=return_activity)


def _m_norm(M, x):
    return float(np.sqrt(max(x @ (M @ x), 0.0)))


def step(u_prev: np.ndarray, n: int, grid: TimeGrid, disc: Discretization,
         clamp: CutoffBounds, fp: FixedPointConfig | None = None, u_guess=None):
    """One backward Euler step; returns (u^n, phi^n, diagnostics)."""
    fp = fp or FixedPointConfig()
    data = disc.data
    tau = grid.tau
    t = grid.t(n)
    space = disc.space_u
    dofs = space.dirichlet_vertices
    gn = disc.g_u(t)
    gphi = disc.g_phi(t)
    A = disc.heat_matrix(tau)
    M = disc.M
    fl = disc.load(t)
    base = M @ u_prev + tau * fl

    gamma = np.array(u_prev if u_guess is None else u_guess, dtype=float)
    gamma[dofs] = gn[dofs]
    updates = []
    cg_total = 0
    lin_res = 0.0
    phi = None
    converged = False
    it = 0
    while it < fp.max_iter:
        it += 1
        u_fun = space.function(gamma)
        phi = solve_potential(u_fun, t, disc, fp.linear,
                              x0=None if phi is None else phi.coefficients)
        cg_total += phi.solve_info[0]
        F = joule_vector(u_fun, phi, gphi, disc, clamp)
        Ad, rhs = fem.apply_dirichlet(A, base + tau * F, dofs, gn[dofs])
        res = cg_solve(Ad, rhs, fp.linear, x0=gamma)
        cg_total += res.iterations
        lin_res = max(lin_res, res.residual / max(np.linalg.norm(rhs), 1e-300))
        beta = res.x
        if fp.detect_constant_map and data.sigma.is_constant:
            # phi does not depend on u, so the map is constant: beta is the fixed point
            updates.append(0.0)
            gamma = beta
            converged = True
            break
        upd = _m_norm(M, beta - gamma) / max(_m_norm(M, gamma), fp.eps)
        updates.append(upd)
        gamma = beta
        if upd <= fp.tol:
            converged = True
            break
    ratio = _contraction(updates, fp.tol)
    if not converged:
        raise FixedPointError(
            f"fixed point did not converge in {fp.max_iter} iterations at step {n} "
            f"(last update {updates[-1]:.3e}, contraction ratio {ratio:.3f})", ratio)

    u_fun = space.function(gamma)
    phi = solve_potential(u_fun, t, disc, fp.linear, x0=phi.coefficients)
    F, active = joule_vector(u_fun, phi, gphi, disc, clamp, return_activity=True)
    energy = energy_identity_residual(gamma, u_prev, gn, F + fl, disc, tau)
    gnorm, gbound = potential_bound(phi, gphi, disc)
    diag = StepDiagnostics(n, t, it, updates, ratio, energy, gnorm, gbound, active,
                           lin_res, cg_total)
    return gamma, phi.coefficients, diag


def _contraction(updates, tol) -> float:
    """Worst ratio of consecutive updates above the solver noise floor."""
    ratios = [b / a for a, b in zip(updates, updates[1:]) if a > 1e3 * tol]
    return float(max(ratios)) if ratios else 0.0


def energy_identity_residual(u_n, u_prev, g_n, rhs_vec, disc: Discretization, tau) -> float:
    """Relative defect of the step equation tested with tau * u~^n."""
    ut = u_n - g_n
    ut[disc.space_u.dirichlet_vertices] = 0.0
    a = ut @ (disc.M @ (u_n - u_prev))
    b = tau * (ut @ (disc.K @ u_n))
    c = tau * (ut @ rhs_vec)
    scale = abs(a) + abs(b) + abs(c)
    if scale == 0.0:
        return 0.0
    return abs(a + b - c) / scale


def potential_bound(phi: FeFunction, gphi: FeFunction, disc: Discretization):
    """||grad phi~|| and the stability bound (s_hi/s_lo) ||grad g_phi||."""
    K = disc.K
    pt = phi.coefficients - gphi.coefficients
    lhs = float(np.sqrt(max(pt @ (K @ pt), 0.0)))
    g = gphi.coefficients
    s = disc.data.sigma
    rhs = s.upper / s.lower * float(np.sqrt(max(g @ (K @ g), 0.0)))
    return lhs, rhs


def run(data: ProblemData, mesh: Mesh, grid: TimeGrid, fp: FixedPointConfig | None = None,
        callback=None) -> TransientSolution:
    """March the scheme over the whole time grid."""
    fp = fp or FixedPointConfig()
    disc = Discretization(mesh, data)
    clamp = data.cutoff(mesh, grid.points)
    u = project_initial(data, disc, fp.linear)
    phi0 = solve_potential(u, 0.0, disc, fp.linear)
    sol = TransientSolution([0.0], [u.coefficients], [phi0.coefficients], [], [mesh],
                            grid=grid, clamp=clamp)
    u_prev = u.coefficients
    for n in range(1, grid.num_steps + 1):
        u_n, phi_n, diag = step(u_prev, n, grid, disc, clamp, fp)
        log.info("step %d t=%.4g fp_iters=%d energy=%.2e", n, diag.t, diag.fp_iters,
                 diag.energy_residual)
        sol.times.append(diag.t)
        sol.u.append(u_n)
        sol.phi.append(phi_n)
        sol.diagnostics.append(diag)
        sol.meshes.append(mesh)
        if callback is not None:
            callback(n, sol)
        u_prev = u_n
    return sol
