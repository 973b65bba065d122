"""Error norms in L2(0,T;H1) and convergence orders."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .fem import cell_geometry, quadrature_points
from .mesh import Mesh, transfer_nested
from .quadrature import TET_DEG5


@dataclass
class ErrorReport:
    k: list = field(default_factory=list)
    h: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    dofs: list = field(default_factory=list)
    rel_err_u: list = field(default_factory=list)
    rel_err_phi: list = field(default_factory=list)

    def add(self, k, h, tau, dofs, err_u, err_phi=float("nan")):
        if self.k and k <= self.k[-1]:
            raise ValueError("levels must be strictly increasing")
        for e in (err_u, err_phi):
            if not (math.isnan(e) or (e >= 0 and math.isfinite(e))):
                raise ValueError(f"invalid error value {e}")
        self.k.append(k)
        self.h.append(h)
        self.tau.append(tau)
        self.dofs.append(dofs)
        self.rel_err_u.append(err_u)
        self.rel_err_phi.append(err_phi)

    def orders(self, which: str = "u") -> list:
        errs = self.rel_err_u if which == "u" else self.rel_err_phi
        return observed_order(errs) if len(errs) >= 2 else []

    def rows(self) -> list[dict]:
        ou, op = self.orders("u"), self.orders("phi")
        out = []
        for i in range(len(self.k)):
            out.append({
                "k": self.k[i], "h": self.h[i], "tau": self.tau[i], "dofs": self.dofs[i],
                "rel_err_u": self.rel_err_u[i], "rel_err_phi": self.rel_err_phi[i],
                "order_u": ou[i - 1] if i else float("nan"),
                "order_phi": op[i - 1] if i else float("nan"),
            })
        return out

    def write_csv(self, path):
        cols = ["k", "h", "tau", "dofs", "rel_err_u", "rel_err_phi", "order_u", "order_phi"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(cols)
            for row in self.rows():
                w.writerow([format_value(row[c]) for c in cols])
        return path

    def write_plot_data(self, path):
        """log10 h against log10 error, whitespace separated."""
        with open(path, "w") as fh:
            fh.write("# log10_h log10_err_u log10_err_phi\n")
            for h, eu, ep in zip(self.h, self.rel_err_u, self.rel_err_phi):
                lp = math.log10(ep) if ep > 0 else float("nan")
                fh.write(f"{math.log10(h):.12e} {math.log10(eu) if eu > 0 else float('nan'):.12e} "
                         f"{lp:.12e}\n")


def format_value(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12e}"


def observed_order(errors) -> list:
    """log2(e_k / e_{k+1}); an exactly resolved level gives +inf."""
    errors = [float(e) for e in errors]
    if len(errors) < 2:
        raise ValueError("need at least two levels")
    out = []
    for a, b in zip(errors, errors[1:]):
        if b == 0.0:
            out.append(math.inf)
        elif a == 0.0:
            out.append(-math.inf)
        else:
            out.append(math.log2(a / b))
    return out


def h1_norm_sq(mesh: Mesh, values=None, exact=None, exact_grad=None, t: float = 0.0,
               rule=TET_DEG5) -> float:
    """Squared H1 norm of ``exact - values`` (either part may be omitted)."""
    grads, vol = cell_geometry(mesh)
    xq = quadrature_points(mesh, rule)
    val = np.zeros(xq.shape[:2])
    grd = np.zeros(xq.shape)
    if exact is not None:
        val += np.asarray(exact(xq.reshape(-1, 3), t)).reshape(val.shape)
        grd += np.asarray(exact_grad(xq.reshape(-1, 3), t)).reshape(grd.shape)
    if values is not None:
        c = np.asarray(values)[mesh.cells]
        val -= np.einsum("qi,ci->cq", rule.points, c)
        grd -= np.einsum("cid,ci->cd", grads, c)[:, None, :]
    dens = val ** 2 + (grd ** 2).sum(axis=2)
    return float((vol * (dens @ rule.weights)).sum())


def h1_norm(mesh: Mesh, values=None, exact=None, exact_grad=None, t: float = 0.0) -> float:
    return math.sqrt(h1_norm_sq(mesh, values, exact, exact_grad, t))


def simpson(f0, fm, f1, dt):
    return dt / 6.0 * (f0 + 4.0 * fm + f1)


def space_time_error(solution, exact, exact_grad, field_name: str = "u", relative=True):
    """Simpson-in-time L2(0,T;H1) error of a piecewise-constant-in-time trajectory.

    On I_n = (t_{n-1}, t_n] the discrete solution equals its value at t_n.
    """
    times = solution.times
    vals = solution.u if field_name == "u" else solution.phi
    err2 = 0.0
    ref2 = 0.0
    for n in range(1, len(times)):
        t0, t1 = times[n - 1], times[n]
        tm = 0.5 * (t0 + t1)
        mesh = solution.meshes[n]
        e = [h1_norm_sq(mesh, vals[n], exact, exact_grad, t) for t in (t0, tm, t1)]
        err2 += simpson(*e, t1 - t0)
        if relative:
            r = [h1_norm_sq(mesh, None, exact, exact_grad, t) for t in (t0, tm, t1)]
            ref2 += simpson(*r, t1 - t0)
    if not relative:
        return math.sqrt(err2)
    return math.sqrt(err2 / ref2) if ref2 > 0 else math.sqrt(err2)


def reference_compare(coarse, fine, field_name: str = "u", relative=True) -> float:
    """Error of a coarse trajectory against a finer reference on nested meshes and grids.

    The comparison is made at the coarse time points, where the reference has
    coincident levels; the coarse values are prolongated exactly to the fine mesh.
    """
    ct = np.asarray(coarse.times)
    ft = np.asarray(fine.times)
    tau_c = ct[1] - ct[0]
    tau_f = ft[1] - ft[0]
    ratio = tau_c / tau_f
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise ValueError("time grids are not nested")
    ratio = int(round(ratio))
    if abs(ct[-1] - ft[-1]) > 1e-12:
        raise ValueError("time grids cover different intervals")
    cv = coarse.u if field_name == "u" else coarse.phi
    fv = fine.u if field_name == "u" else fine.phi
    err2 = 0.0
    ref2 = 0.0
    for n in range(1, len(ct)):
        cm, fm = coarse.meshes[n], fine.meshes[n * ratio]
        if cm.domain_volume is not None and fm.domain_volume is not None and \
                abs(cm.domain_volume - fm.domain_volume) > 1e-12:
            raise ValueError("meshes cover different domains")
        if fm.num_vertices < cm.num_vertices:
            raise ValueError("reference mesh is coarser than the compared mesh")
        up = transfer_nested(cm, cv[n], fm)
        ref = fv[n * ratio]
        err2 += tau_c * h1_norm_sq(fm, up - ref)
        ref2 += tau_c * h1_norm_sq(fm, ref)
    if not relative:
        return math.sqrt(err2)
    return math.sqrt(err2 / ref2) if ref2 > 0 else math.sqrt(err2)
