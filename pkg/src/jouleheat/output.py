"""File outputs: legacy VTK, RFC-4180 CSV tables and key=value run summaries."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import format_value
from .mesh import Mesh

VTK_TETRA = 10


def write_vtk(path, mesh: Mesh, point_data: dict | None = None, cell_data: dict | None = None,
              title: str = "jouleheat"):
    """Legacy ASCII VTK 3.0 unstructured grid with scalar point/cell fields."""
    path = Path(path)
    nv, nc = mesh.num_vertices, mesh.num_cells
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{x:.16e} {y:.16e} {z:.16e}" for x, y, z in mesh.vertices]
    lines.append(f"CELLS {nc} {5 * nc}")
    lines += [f"4 {a} {b} {c} {d}" for a, b, c, d in mesh.cells]
    lines.append(f"CELL_TYPES {nc}")
    lines += [str(VTK_TETRA)] * nc
    for header, n, data in (("POINT_DATA", nv, point_data), ("CELL_DATA", nc, cell_data)):
        if not data:
            continue
        lines.append(f"{header} {n}")
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (n,):
                raise ValueError(f"field {name!r} has shape {values.shape}, expected ({n},)")
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.16e}" for v in values]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_counts(path) -> tuple[int, int]:
    """Point and cell counts of a legacy VTK file (used by tests and mesh-info)."""
    npts = ncells = 0
    with open(path) as fh:
        for line in fh:
            if line.startswith("POINTS"):
                npts = int(line.split()[1])
            elif line.startswith("CELLS"):
                ncells = int(line.split()[1])
    return npts, ncells


def write_table(path, rows: list[dict], columns: list[str] | None = None):
    """CSV with CRLF line ends and fixed float formatting, so reruns are byte-identical."""
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])
    return Path(path)


def _cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(x) for x in v)
    return format_value(v)


DIAGNOSTIC_COLUMNS = ["n", "t", "fp_iters", "contraction", "energy_residual", "grad_phi_norm",
                      "grad_phi_bound", "clamp_active_fraction", "linear_residual", "cg_iters"]


def write_diagnostics(path, diagnostics):
    rows = []
    for d in diagnostics:
        rows.append({"n": d.n, "t": d.t, "fp_iters": d.fp_iters, "contraction": d.contraction,
                     "energy_residual": d.energy_residual, "grad_phi_norm": d.grad_phi_norm,
                     "grad_phi_bound": d.grad_phi_bound,
                     "clamp_active_fraction": d.clamp_active_fraction,
                     "linear_residual": d.linear_residual, "cg_iters": d.cg_iters})
    return write_table(path, rows, DIAGNOSTIC_COLUMNS)


def write_summary(path, items: dict):
    """One ``key=value`` per line, keys sorted; floats in %.12e."""
    out = []
    for key in sorted(items):
        if any(c in key for c in "=\n ") or not key:
            raise ValueError(f"invalid summary key {key!r}")
        v = items[key]
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, str):
            s = v.replace("\n", " ")
        else:
            s = format_value(v)
        out.append(f"{key}={s}")
    Path(path).write_text("\n".join(out) + "\n")
    return Path(path)


def read_summary(path) -> dict:
    items = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        items[key] = value
    return items


def summary_float(value: str) -> float:
    return math.nan if value == "nan" else float(value)
