"""Manufactured solutions with closed-form derivatives and a finite-difference audit."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .solver import SigmaModel

FD_STEP = 1e-5


class AuditError(AssertionError):
    pass


@dataclass(frozen=True)
class MmsCase:
    """Exact temperature u(x, t) and time-independent potential phi(x) with their derivatives.

    ``f`` is the extra heat source making u, phi satisfy
    D_t u - lap u = s(u) |grad phi|^2 + f and div(s(u) grad phi) = 0.
    """

    name: str
    u: Callable
    dt_u: Callable
    grad_u: Callable
    lap_u: Callable
    phi: Callable
    grad_phi: Callable
    lap_phi: Callable
    sigma: SigmaModel
    f: Callable
    g_u: Callable
    g_phi: Callable
    u0: Callable
    T: float = 0.1
    domain: tuple = ((0.0, 1.0),) * 3

    def g_N(self, x, t=0.0, normal=None):
        """Consistent Neumann datum s(u) n.grad(phi) for a given outward normal."""
        return self.sigma(self.u(x, t)) * (self.grad_phi(x) @ np.asarray(normal, dtype=float))

    def inside(self, x) -> bool:
        x = np.atleast_2d(x)
        return all(np.all((x[:, i] > lo) & (x[:, i] < hi)) for i, (lo, hi) in enumerate(self.domain))


def derive_residual(case: MmsCase, x, t):
    """Parabolic and elliptic PDE residuals of the case from its analytic derivatives."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not case.inside(x):
        raise ValueError("residual requested outside the domain")
    u = case.u(x, t)
    s = case.sigma(u)
    gphi = case.grad_phi(x)
    par = case.dt_u(x, t) - case.lap_u(x, t) - s * (gphi ** 2).sum(axis=1) - case.f(x, t)
    # div(s(u) grad phi) = s'(u) grad u . grad phi + s(u) lap phi
    ell = case.sigma.d(u) * (case.grad_u(x, t) * gphi).sum(axis=1) + s * case.lap_phi(x)
    return par, ell


def residual_audit(case: MmsCase, samples: int = 100, tol: float = 1e-8, seed: int = 0):
    """Gate: analytic residuals vanish and the supplied derivatives agree with finite differences."""
    rng = np.random.default_rng(seed)
    lo = np.array([d[0] for d in case.domain])
    hi = np.array([d[1] for d in case.domain])
    margin = 0.01 * (hi - lo)
    x = lo + margin + rng.random((samples, 3)) * (hi - lo - 2 * margin)
    t = rng.uniform(0.1 * case.T, 0.9 * case.T, samples)
    worst = 0.0
    for xi, ti in zip(x, t):
        par, ell = derive_residual(case, xi[None], ti)
        worst = max(worst, abs(par[0]), abs(ell[0]))
    if worst > tol:
        raise AuditError(f"{case.name}: analytic residual {worst:.3e} exceeds {tol}")
    # finite differences cross-check the transcribed derivatives
    h = FD_STEP
    fd_tol = 1e-4
    e = np.eye(3) * h
    for xi, ti in zip(x, t):
        xi = xi[None]
        dt = (case.u(xi, ti + h) - case.u(xi, ti - h)) / (2 * h)
        gu = np.stack([(case.u(xi + e[i], ti) - case.u(xi - e[i], ti)) / (2 * h) for i in range(3)], 1)
        lap = sum((case.u(xi + e[i], ti) - 2 * case.u(xi, ti) + case.u(xi - e[i], ti)) / h ** 2
                  for i in range(3))
        gp = np.stack([(case.phi(xi + e[i]) - case.phi(xi - e[i])) / (2 * h) for i in range(3)], 1)
        checks = [(dt, case.dt_u(xi, ti)), (gu, case.grad_u(xi, ti)), (lap, case.lap_u(xi, ti)),
                  (gp, case.grad_phi(xi))]
        for fd, an in checks:
            if np.max(np.abs(fd - an)) > fd_tol:
                raise AuditError(f"{case.name}: supplied derivative disagrees with finite differences")
    return worst


def _bubble(x):
    return np.prod(x * (1 - x), axis=1)


def example1_case() -> MmsCase:
    """u = x1(1-x1)x2(1-x2)x3(1-x3) + t, phi = x2, sigma = 1 on the unit cube."""
    def u(x, t):
        return _bubble(x) + t

    def dt_u(x, t):
        return np.ones(len(x))

    def grad_u(x, t):
        q = x * (1 - x)
        dq = 1 - 2 * x
        return np.stack([dq[:, 0] * q[:, 1] * q[:, 2], q[:, 0] * dq[:, 1] * q[:, 2],
                         q[:, 0] * q[:, 1] * dq[:, 2]], axis=1)

    def lap_u(x, t):
        q = x * (1 - x)
        return -2 * (q[:, 1] * q[:, 2] + q[:, 0] * q[:, 2] + q[:, 0] * q[:, 1])

    def f(x, t):
        q = x * (1 - x)
        return 2 * (q[:, 0] * q[:, 1] + q[:, 0] * q[:, 2] + q[:, 1] * q[:, 2])

    return MmsCase(
        name="example1",
        u=u, dt_u=dt_u, grad_u=grad_u, lap_u=lap_u,
        phi=lambda x: x[:, 1].copy(),
        grad_phi=lambda x: np.tile([0.0, 1.0, 0.0], (len(x), 1)),
        lap_phi=lambda x: np.zeros(len(x)),
        sigma=SigmaModel.constant(1.0),
        f=f,
        g_u=lambda x, t: np.full(len(x), float(t)),
        g_phi=lambda x, t: x[:, 1].copy(),
        u0=lambda x, t=0.0: _bubble(x),
        T=0.1,
    )


def example1_literal_gN(x, t=0.0):
    """The Neumann datum -1 + 2 x2 as printed for Example 1 (inconsistent with phi = x2)."""
    return -1.0 + 2.0 * x[:, 1]


def zero_case() -> MmsCase:
    z = lambda x, t=0.0: np.zeros(len(x))  # noqa: E731
    zg = lambda x, t=0.0: np.zeros((len(x), 3))  # noqa: E731
    return MmsCase("zero", z, z, zg, z, lambda x: np.zeros(len(x)), lambda x: np.zeros((len(x), 3)),
                   lambda x: np.zeros(len(x)), SigmaModel.constant(1.0), z, z, z, z)
