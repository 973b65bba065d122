"""Conforming tetrahedral meshes of the unit cube and the Fichera cube.

Meshes are immutable containers of numpy arrays.  Generators split every
sub-cube into six Kuhn tetrahedra sharing the main diagonal, which keeps
uniform (red) refinement self-similar so that the maximal diameter halves
exactly.  Local refinement uses longest-edge bisection with a global edge
order, which guarantees a conforming closure.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

# geometric tagging tolerance
TAG_TOL = 1e-10
MAX_VERTICES = 2_000_000

# face k of a tetrahedron is the face opposite to local vertex k
_LOCAL_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
_LOCAL_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])

# unit cube tags: x_i = 0 -> 2i+1, x_i = 1 -> 2i+2
UNIT_CUBE_TAGS = {
    "x1=0": 1, "x1=1": 2, "x2=0": 3, "x2=1": 4, "x3=0": 5, "x3=1": 6,
}
# Fichera cube: outer faces x_i = -1 / +1 and the three re-entrant faces x_i = 0
FICHERA_TAGS = {
    "x1=-1": 1, "x1=1": 2, "x2=-1": 3, "x2=1": 4, "x3=-1": 5, "x3=1": 6,
    "x1=0": 7, "x2=0": 8, "x3=0": 9,
}


class MeshError(RuntimeError):
    pass


class MeshResourceError(MeshError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Tetrahedral mesh with tagged boundary facets.

    ``vertex_parents`` maps each vertex to two vertices of the parent mesh
    whose average is its position (old vertices map to themselves), which
    makes P1 prolongation exact.  ``refinement_parent`` maps each cell to the
    parent cell containing it.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    domain_volume: float | None = None
    refinement_parent: np.ndarray | None = None
    vertex_parents: np.ndarray | None = None
    name: str = "mesh"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for arr in (self.vertices, self.cells, self.facets, self.facet_tags):
            arr.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def tags(self) -> set[int]:
        return set(int(t) for t in np.unique(self.facet_tags))

    def signed_volumes(self) -> np.ndarray:
        if "vol" not in self._cache:
            p = self.vertices[self.cells]
            d = p[:, 1:] - p[:, :1]
            self._cache["vol"] = np.linalg.det(d) / 6.0
        return self._cache["vol"]

    def volumes(self) -> np.ndarray:
        return np.abs(self.signed_volumes())

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique sorted edges and the (C, 6) cell-to-edge map."""
        if "edges" not in self._cache:
            e = np.sort(self.cells[:, _LOCAL_EDGES].reshape(-1, 2), axis=1)
            uniq, inv = np.unique(e, axis=0, return_inverse=True)
            self._cache["edges"] = (uniq, inv.reshape(-1, 6))
        return self._cache["edges"]

    def faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique sorted faces and the (C, 4) cell-to-face map (face k opposite vertex k)."""
        if "faces" not in self._cache:
            f = np.sort(self.cells[:, _LOCAL_FACES].reshape(-1, 3), axis=1)
            uniq, inv = np.unique(f, axis=0, return_inverse=True)
            self._cache["faces"] = (uniq, inv.reshape(-1, 4))
        return self._cache["faces"]

    def cell_diameters(self) -> np.ndarray:
        p = self.vertices[self.cells]
        d = p[:, _LOCAL_EDGES[:, 0]] - p[:, _LOCAL_EDGES[:, 1]]
        return np.sqrt((d ** 2).sum(axis=2)).max(axis=1)

    def h_max(self) -> float:
        return float(self.cell_diameters().max())

    def facets_with_tags(self, tags) -> np.ndarray:
        tags = np.asarray(sorted(tags), dtype=int)
        return self.facets[np.isin(self.facet_tags, tags)]

    def vertices_on_tags(self, tags) -> np.ndarray:
        return np.unique(self.facets_with_tags(tags).ravel())

    def summary(self) -> dict:
        vol = float(self.volumes().sum())
        return {
            "name": self.name,
            "vertices": self.num_vertices,
            "cells": self.num_cells,
            "boundary_facets": len(self.facets),
            "h": self.h_max(),
            "volume": vol,
        }


def _check_size(n_vertices: int, limit: int | None):
    limit = MAX_VERTICES if limit is None else limit
    if n_vertices > limit:
        raise MeshResourceError(f"mesh would have {n_vertices} vertices, limit is {limit}")


def _kuhn_cells(nodes_index: np.ndarray, cube_origins: np.ndarray) -> np.ndarray:
    """Six positively oriented Kuhn tetrahedra per sub-cube.

    ``nodes_index`` is a 3D array giving the global vertex number of each
    lattice point and ``cube_origins`` lists the (i, j, k) lattice corners of
    the cubes to split.
    """
    cells = []
    for perm in itertools.permutations(range(3)):
        path = [np.zeros(3, dtype=int)]
        for axis in perm:
            step = path[-1].copy()
            step[axis] += 1
            path.append(step)
        corners = [cube_origins + p for p in path]
        tet = np.stack([nodes_index[c[:, 0], c[:, 1], c[:, 2]] for c in corners], axis=1)
        cells.append(tet)
    return np.concatenate(cells, axis=0)


def _orient(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p = vertices[cells]
    vol = np.linalg.det(p[:, 1:] - p[:, :1])
    cells = cells.copy()
    neg = vol < 0
    cells[neg, 0], cells[neg, 1] = cells[neg, 1].copy(), cells[neg, 0].copy()
    return cells


def boundary_faces(cells: np.ndarray) -> np.ndarray:
    """Faces that belong to exactly one cell, oriented by their cell."""
    f = cells[:, _LOCAL_FACES].reshape(-1, 3)
    key = np.sort(f, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return f[counts[inv.ravel()] == 1]


def _tag_by_planes(vertices, facets, planes):
    """Tag facets lying in axis planes; ``planes`` is a list of (axis, value, tag, region)."""
    centroids = vertices[facets].mean(axis=1)
    tags = np.zeros(len(facets), dtype=int)
    for axis, value, tag, region in planes:
        on = np.abs(vertices[facets][:, :, axis] - value).max(axis=1) <= TAG_TOL
        if region is not None:
            on &= region(centroids)
        tags[on & (tags == 0)] = tag
    if np.any(tags == 0):
        raise MeshError("untagged boundary facet")
    return tags


def _structured_box(lo: float, n: int, size: float, keep_cube=None, limit=None):
    lattice = lo + size * np.arange(n + 1)
    ii, jj, kk = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    origins = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
    if keep_cube is not None:
        origins = origins[keep_cube(origins)]
    used = np.zeros((n + 1,) * 3, dtype=bool)
    for d in itertools.product((0, 1), repeat=3):
        c = origins + np.array(d)
        used[c[:, 0], c[:, 1], c[:, 2]] = True
    nv = int(used.sum())
    _check_size(nv, limit)
    index = -np.ones((n + 1,) * 3, dtype=np.int64)
    index[used] = np.arange(nv)
    gi, gj, gk = np.nonzero(used)
    vertices = np.stack([lattice[gi], lattice[gj], lattice[gk]], axis=1)
    cells = _orient(vertices, _kuhn_cells(index, origins))
    return vertices, cells


def from_cells(vertices, cells, tag: int = 1, name: str = "mesh") -> Mesh:
    """Mesh from raw arrays with every boundary facet carrying ``tag``."""
    vertices = np.array(vertices, dtype=float)
    cells = _orient(vertices, np.array(cells, dtype=np.int64))
    facets = boundary_faces(cells)
    vol = float(np.abs(np.linalg.det(vertices[cells][:, 1:] - vertices[cells][:, :1])).sum() / 6)
    return Mesh(vertices, cells, facets, np.full(len(facets), tag, dtype=int), domain_volume=vol, name=name)


def unit_cube_mesh(k: int, limit: int | None = None) -> Mesh:
    """Kuhn mesh of [0,1]^3 with 2^k sub-cubes per side; h = 2^-k sqrt(3)."""
    if k < 0:
        raise ValueError("refinement level must be nonnegative")
    n = 2 ** k
    _check_size((n + 1) ** 3, limit)
    vertices, cells = _structured_box(0.0, n, 1.0 / n, limit=limit)
    facets = boundary_faces(cells)
    planes = [(ax, val, UNIT_CUBE_TAGS[f"x{ax + 1}={val}"], None)
              for ax in range(3) for val in (0, 1)]
    tags = _tag_by_planes(vertices, facets, planes)
    return Mesh(vertices, cells, facets, tags, domain_volume=1.0, name=f"unit_cube_k{k}")


def fichera_mesh(k: int, limit: int | None = None) -> Mesh:
    """Kuhn mesh of [-1,1]^3 minus [0,1]^3 with sub-cube size 2^-k."""
    if k < 0:
        raise ValueError("refinement level must be nonnegative")
    n = 2 ** (k + 1)
    half = n // 2
    _check_size((n + 1) ** 3 - half ** 3, limit)

    def keep(origins):
        return ~np.all(origins >= half, axis=1)

    vertices, cells = _structured_box(-1.0, n, 2.0 / n, keep_cube=keep, limit=limit)
    facets = boundary_faces(cells)

    def in_octant(a, b):
        return lambda c: (c[:, a] > 0) & (c[:, b] > 0)

    planes = []
    for ax in range(3):
        planes.append((ax, -1.0, FICHERA_TAGS[f"x{ax + 1}=-1"], None))
        planes.append((ax, 1.0, FICHERA_TAGS[f"x{ax + 1}=1"], None))
    for ax in range(3):
        a, b = [d for d in range(3) if d != ax]
        planes.append((ax, 0.0, FICHERA_TAGS[f"x{ax + 1}=0"], in_octant(a, b)))
    tags = _tag_by_planes(vertices, facets, planes)
    return Mesh(vertices, cells, facets, tags, domain_volume=7.0, name=f"fichera_k{k}")


def fichera_vertex_count(k: int) -> int:
    n = 2 ** (k + 1)
    return (n + 1) ** 3 - (n // 2) ** 3


# Bey's red refinement; indices 0..3 are vertices, 4..9 edge midpoints in _LOCAL_EDGES order
_RED_CHILDREN = np.array([
    [0, 4, 5, 6], [4, 1, 7, 8], [5, 7, 2, 9], [6, 8, 9, 3],
    [4, 5, 6, 8], [4, 5, 7, 8], [5, 6, 8, 9], [5, 7, 8, 9],
])


def refine_uniform(mesh: Mesh, limit: int | None = None) -> Mesh:
    """Red refinement: each cell is split into 8 children."""
    edges, cell_edges = mesh.edges()
    nv = mesh.num_vertices
    _check_size(nv + len(edges), limit)
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])
    local = np.hstack([mesh.cells, nv + cell_edges])
    cells = local[:, _RED_CHILDREN].reshape(-1, 4)
    cells = _orient(vertices, cells)
    parent = np.repeat(np.arange(mesh.num_cells), 8)

    # split each boundary facet into 4 via the midpoints of its edges
    edge_id = {tuple(e): i for i, e in enumerate(edges)}
    f = mesh.facets
    m = np.empty((len(f), 3), dtype=np.int64)
    for j, (a, b) in enumerate(((0, 1), (1, 2), (0, 2))):
        pairs = np.sort(f[:, [a, b]], axis=1)
        m[:, j] = nv + np.array([edge_id[tuple(p)] for p in pairs], dtype=np.int64)
    facets = np.concatenate([
        np.stack([f[:, 0], m[:, 0], m[:, 2]], axis=1),
        np.stack([m[:, 0], f[:, 1], m[:, 1]], axis=1),
        np.stack([m[:, 2], m[:, 1], f[:, 2]], axis=1),
        np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
    ])
    tags = np.tile(mesh.facet_tags, 4)
    vparents = np.vstack([np.stack([np.arange(nv)] * 2, axis=1), edges])
    return Mesh(vertices, cells, facets, tags, domain_volume=mesh.domain_volume,
                refinement_parent=parent, vertex_parents=vparents,
                name=mesh.name + "+r")


def _edge_rank_key(vertices, edges):
    """Sort key making 'longest edge' a strict total order."""
    length = np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)
    return np.round(length, 12), edges


def refine_marked(mesh: Mesh, marked, max_rounds: int = 200, limit: int | None = None) -> Mesh:
    """Longest-edge bisection of the marked cells with conforming closure.

    Every cell carrying a marked edge is bisected at its own longest edge;
    equal lengths are ordered by the lowest vertex-index pair.  New edges
    created by bisection are never marked, so the recursion only climbs the
    longest-edge propagation paths.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.num_cells:
        raise ValueError("marked cell index out of range")

    verts = [tuple(v) for v in mesh.vertices]
    coords = list(mesh.vertices)
    cells = [tuple(c) for c in mesh.cells]
    parent = list(range(mesh.num_cells))
    vparents = [(i, i) for i in range(mesh.num_vertices)]
    facet_tag = {tuple(sorted(f)): int(t) for f, t in zip(mesh.facets, mesh.facet_tags)}
    facet_orient = {tuple(sorted(f)): tuple(f) for f in mesh.facets}
    midpoint: dict[tuple[int, int], int] = {}

    def key(a, b):
        pa, pb = coords[a], coords[b]
        length = round(float(np.sqrt(((pa - pb) ** 2).sum())), 12)
        lo, hi = (a, b) if a < b else (b, a)
        # longest first; ties broken by the lowest index pair
        return (-length, lo, hi)

    def longest_edge(c):
        best = None
        for i, j in _LOCAL_EDGES:
            kk = key(c[i], c[j])
            if best is None or kk < best[0]:
                best = (kk, (c[i], c[j]))
        a, b = best[1]
        return (a, b) if a < b else (b, a)

    def cell_edges(c):
        for i, j in _LOCAL_EDGES:
            a, b = c[i], c[j]
            yield (a, b) if a < b else (b, a)

    to_split = {longest_edge(cells[c]) for c in marked}
    for _ in range(max_rounds):
        # closure: a cell containing a marked edge must split its longest edge
        changed = True
        while changed:
            changed = False
            for c in cells:
                if any(e in to_split for e in cell_edges(c)):
                    le = longest_edge(c)
                    if le not in to_split:
                        to_split.add(le)
                        changed = True
        if not to_split:
            break
        new_cells, new_parent = [], []
        bisected_any = False
        for c, par in zip(cells, parent):
            le = longest_edge(c)
            if le not in to_split:
                new_cells.append(c)
                new_parent.append(par)
                continue
            bisected_any = True
            a, b = le
            m = midpoint.get(le)
            if m is None:
                m = len(coords)
                coords.append(0.5 * (coords[a] + coords[b]))
                vparents.append((a, b))
                midpoint[le] = m
            ia, ib = c.index(a), c.index(b)
            c1 = list(c)
            c1[ib] = m
            c2 = list(c)
            c2[ia] = m
            new_cells += [tuple(c1), tuple(c2)]
            new_parent += [par, par]
            # split boundary facets containing the edge
            others = [v for v in c if v not in (a, b)]
            for o in others:
                fk = tuple(sorted((a, b, o)))
                if fk in facet_tag:
                    tag = facet_tag.pop(fk)
                    orient = list(facet_orient.pop(fk))
                    f1 = [m if v == b else v for v in orient]
                    f2 = [m if v == a else v for v in orient]
                    for f in (f1, f2):
                        facet_tag[tuple(sorted(f))] = tag
                        facet_orient[tuple(sorted(f))] = tuple(f)
        cells, parent = new_cells, new_parent
        # an edge is done once no cell contains it any more
        remaining = set()
        for c in cells:
            for e in cell_edges(c):
                if e in to_split:
                    remaining.add(e)
        to_split = remaining
        if len(coords) > (MAX_VERTICES if limit is None else limit):
            raise MeshResourceError("vertex limit exceeded during bisection")
        if not to_split:
            break
        if not bisected_any:
            raise MeshError("bisection closure stalled")
    else:
        raise MeshError("bisection closure did not terminate within the round cap")

    vertices = np.array(coords)
    cells_arr = _orient(vertices, np.array(cells, dtype=np.int64))
    fkeys = sorted(facet_tag)
    facets = np.array([facet_orient[k] for k in fkeys], dtype=np.int64)
    tags = np.array([facet_tag[k] for k in fkeys], dtype=int)
    return Mesh(vertices, cells_arr, facets, tags, domain_volume=mesh.domain_volume,
                refinement_parent=np.array(parent, dtype=np.int64),
                vertex_parents=np.array(vparents, dtype=np.int64), name=mesh.name + "+b")


def conformity_audit(mesh: Mesh) -> bool:
    """Every face is shared by at most two cells, boundary faces are exactly
    the tagged facets and no vertex hangs in the middle of an edge."""
    faces, cell_faces = mesh.faces()
    counts = np.bincount(cell_faces.ravel(), minlength=len(faces))
    if counts.max() > 2:
        return False
    bnd = {tuple(f) for f in faces[counts == 1]}
    tagged = {tuple(sorted(f)) for f in mesh.facets}
    if bnd != tagged or len(tagged) != len(mesh.facets):
        return False
    # hanging nodes: an edge midpoint that is also a mesh vertex
    edges, _ = mesh.edges()
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(mesh.vertices).query(mid)
    scale = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
    return bool(np.all(dist > 1e-9 * scale))


def prolongate(fine: Mesh, coarse_values: np.ndarray) -> np.ndarray:
    """Exact P1 transfer of nodal values onto a mesh produced by refinement."""
    if fine.vertex_parents is None:
        raise MeshError("mesh carries no refinement history")
    vp = fine.vertex_parents
    coarse_values = np.asarray(coarse_values, dtype=float)
    n_coarse = len(coarse_values)
    n_parent = int(np.argmin(np.append(vp[:, 0] == np.arange(len(vp)), False)))
    if n_coarse != n_parent:
        raise MeshError(f"{n_coarse} values given, parent mesh has {n_parent} vertices")
    out = np.empty(len(vp))
    out[:n_coarse] = coarse_values
    # midpoints may depend on midpoints created earlier in the same refinement
    done = np.zeros(len(vp), dtype=bool)
    done[:n_coarse] = True
    todo = np.arange(n_coarse, len(vp))
    while todo.size:
        ready = done[vp[todo, 0]] & done[vp[todo, 1]]
        if not ready.any():
            raise MeshError("cyclic vertex parents")
        idx = todo[ready]
        out[idx] = 0.5 * (out[vp[idx, 0]] + out[vp[idx, 1]])
        done[idx] = True
        todo = todo[~ready]
    return out


def locate_points(mesh: Mesh, points: np.ndarray, candidates: int = 24, tol: float = 1e-10):
    """Containing cell and barycentric coordinates for each point."""
    from scipy.spatial import cKDTree

    points = np.atleast_2d(points)
    p = mesh.vertices[mesh.cells]
    centroids = p.mean(axis=1)
    T = np.transpose(p[:, 1:] - p[:, :1], (0, 2, 1))
    Tinv = np.linalg.inv(T)
    kq = min(candidates, mesh.num_cells)
    _, near = cKDTree(centroids).query(points, k=kq)
    near = near.reshape(len(points), kq)
    cell = -np.ones(len(points), dtype=np.int64)
    bary = np.zeros((len(points), 4))
    for j in range(kq):
        todo = cell < 0
        if not todo.any():
            break
        c = near[todo, j]
        lam = np.einsum("nij,nj->ni", Tinv[c], points[todo] - p[c, 0])
        full = np.hstack([1.0 - lam.sum(axis=1, keepdims=True), lam])
        ok = full.min(axis=1) >= -tol
        idx = np.nonzero(todo)[0][ok]
        cell[idx] = c[ok]
        bary[idx] = full[ok]
    missing = np.nonzero(cell < 0)[0]
    for i in missing:
        lam = np.einsum("nij,nj->ni", Tinv, points[i] - p[:, 0])
        full = np.hstack([1.0 - lam.sum(axis=1, keepdims=True), lam])
        best = int(np.argmax(full.min(axis=1)))
        if full[best].min() < -tol:
            raise MeshError(f"point {points[i]} lies outside the mesh")
        cell[i] = best
        bary[i] = full[best]
    return cell, bary


def evaluate_p1(mesh: Mesh, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    cell, bary = locate_points(mesh, points)
    return np.einsum("ni,ni->n", bary, np.asarray(values)[mesh.cells[cell]])


def transfer_nested(coarse: Mesh, coarse_values: np.ndarray, fine: Mesh) -> np.ndarray:
    """P1 prolongation onto a nested fine mesh by evaluation at the fine vertices."""
    return evaluate_p1(coarse, coarse_values, fine.vertices)


@dataclass(frozen=True)
class BoundaryPartition:
    """Dirichlet/Neumann split of the boundary tags for one field."""

    field: str
    dirichlet_tags: frozenset
    neumann_tags: frozenset

    @classmethod
    def from_dirichlet(cls, mesh: Mesh, field: str, dirichlet_tags) -> "BoundaryPartition":
        d = frozenset(int(t) for t in dirichlet_tags)
        return cls(field, d, frozenset(mesh.tags - d))

    def validate(self, mesh: Mesh):
        if self.field not in ("temperature", "potential"):
            raise ValueError(f"unknown field {self.field!r}")
        if self.dirichlet_tags & self.neumann_tags:
            raise ValueError("Dirichlet and Neumann tags overlap")
        if (self.dirichlet_tags | self.neumann_tags) != mesh.tags:
            raise ValueError("partition does not cover the boundary tags of the mesh")
        if not np.isin(mesh.facet_tags, list(self.dirichlet_tags)).any():
            raise ValueError(f"{self.field}: the Dirichlet boundary has zero measure")
