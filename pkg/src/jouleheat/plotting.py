"""Figures for the report paths (rendered off-screen to files)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 4.5

params = {
    "axes.labelsize": 10,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "figure.figsize": [fig_width, fig_width * golden_mean + 0.4],
    "lines.markersize": 4,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
    "svg.hashsalt": "jouleheat",  # stable SVG ids
}


def _new():
    with matplotlib.rc_context(params):
        fig, ax = plt.subplots()
    return fig, ax


def _save(fig, path):
    with matplotlib.rc_context(params):
        fig.tight_layout()
        fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)
    return path


def plot_convergence(report, path, title=""):
    """log-log error against h with a reference line C h."""
    fig, ax = _new()
    h = np.asarray(report.h)
    eu = np.asarray(report.rel_err_u, dtype=float)
    ep = np.asarray(report.rel_err_phi, dtype=float)
    ax.loglog(h, eu, "o-", label="u")
    if np.all(np.isfinite(ep)) and np.all(ep > 0):
        ax.loglog(h, ep, "s-", label=r"$\varphi$")
    C = eu[-1] / h[-1]
    ax.loglog(h, C * h, "k--", label="Ch")
    ax.set_xlabel("h")
    ax.set_ylabel(r"relative $L^2(0,T;H^1)$ error")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_efficiency(rows, path, title=""):
    """Goal error against vertex count for adaptive and uniform runs."""
    fig, ax = _new()
    for kind, marker in (("adaptive", "o-"), ("uniform", "s--")):
        sel = [r for r in rows if r["kind"] == kind]
        if sel:
            ax.loglog([r["vertices"] for r in sel], [r["goal_error"] for r in sel], marker, label=kind)
    ax.set_xlabel("vertices")
    ax.set_ylabel("relative goal error")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_goal_trace(times, traces: dict, path):
    fig, ax = _new()
    for name, tr in traces.items():
        ax.plot(times, tr, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel(r"$M(u^n)=\int_\Omega u^n$")
    ax.legend()
    return _save(fig, path)


def plot_diagnostics(diagnostics, path):
    """Fixed-point iterations and energy residual per step."""
    fig, ax = _new()
    t = [d.t for d in diagnostics]
    ax.plot(t, [d.fp_iters for d in diagnostics], "o-", label="fixed-point iterations")
    ax.set_xlabel("t")
    ax.set_ylabel("iterations")
    ax2 = ax.twinx()
    ax2.semilogy(t, [max(d.energy_residual, 1e-18) for d in diagnostics], "r^:", label="energy residual")
    ax2.set_ylabel("energy residual")
    return _save(fig, path)
