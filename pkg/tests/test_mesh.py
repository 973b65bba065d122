import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jouleheat.mesh import (FICHERA_TAGS, UNIT_CUBE_TAGS, BoundaryPartition, MeshError, MeshResourceError,
                            conformity_audit, evaluate_p1, fichera_mesh, fichera_vertex_count,
                            locate_points, prolongate, refine_marked, refine_uniform, transfer_nested,
                            unit_cube_mesh)

_CUBE1 = unit_cube_mesh(1)
_FICH1 = fichera_mesh(1)


def test_unit_cube_k0():
    m = unit_cube_mesh(0)
    assert (m.num_vertices, m.num_cells) == (8, 6)
    assert m.volumes().sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_unit_cube_counts_and_diameter(k):
    m = unit_cube_mesh(k)
    assert m.num_vertices == (2 ** k + 1) ** 3
    assert m.num_cells == 6 * 8 ** k
    assert m.h_max() == pytest.approx(2.0 ** -k * np.sqrt(3), rel=1e-14)
    assert abs(m.volumes().sum() - 1.0) <= 1e-12
    assert np.all(m.signed_volumes() > 0)
    assert conformity_audit(m)


def test_unit_cube_k6_vertex_count_by_formula():
    # generating k=6 takes a few seconds; the count follows the same structured formula
    assert (2 ** 6 + 1) ** 3 == 274625


def test_resource_limit():
    with pytest.raises(MeshResourceError):
        unit_cube_mesh(3, limit=100)
    with pytest.raises(ValueError):
        unit_cube_mesh(-1)


def test_unit_cube_tags():
    m = _CUBE1
    assert m.tags == set(UNIT_CUBE_TAGS.values())
    for name, tag in UNIT_CUBE_TAGS.items():
        ax, val = int(name[1]) - 1, float(name[3:])
        pts = m.vertices[m.facets[m.facet_tags == tag]]
        assert np.allclose(pts[..., ax], val)
    # 2 triangles per sub-square, 4 sub-squares per face
    assert np.all(np.bincount(m.facet_tags)[1:] == 8)


def test_fichera_k0():
    m = fichera_mesh(0)
    assert m.num_cells == 42
    assert m.num_vertices == 26 == fichera_vertex_count(0)
    assert m.volumes().sum() == pytest.approx(7.0, abs=1e-12)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_fichera_geometry(k):
    m = fichera_mesh(k)
    assert abs(m.volumes().sum() - 7.0) <= 1e-12
    assert m.num_vertices == fichera_vertex_count(k)
    assert m.tags == set(FICHERA_TAGS.values())
    assert conformity_audit(m)
    # no cell centroid inside the removed octant
    c = m.vertices[m.cells].mean(axis=1)
    assert not np.any(np.all(c > 0, axis=1))
    assert m.h_max() == pytest.approx(2.0 ** -k * np.sqrt(3))


def test_fichera_reentrant_faces_tagged():
    m = _FICH1
    for name in ("x1=0", "x2=0", "x3=0"):
        ax = int(name[1]) - 1
        pts = m.vertices[m.facets[m.facet_tags == FICHERA_TAGS[name]]]
        assert len(pts) > 0
        assert np.allclose(pts[..., ax], 0.0)
        others = np.delete(pts, ax, axis=-1)
        assert np.all(others >= -1e-12)


def test_refine_uniform():
    m = unit_cube_mesh(0)
    r = refine_uniform(m)
    assert r.num_cells == 48
    assert r.volumes().sum() == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(r.vertices[:m.num_vertices], m.vertices)
    assert conformity_audit(r)
    assert r.h_max() == pytest.approx(m.h_max() / 2)


def test_refine_uniform_matches_next_level():
    r = refine_uniform(_CUBE1)
    m2 = unit_cube_mesh(2)
    assert r.num_vertices == m2.num_vertices
    assert r.h_max() == pytest.approx(m2.h_max())
    assert set(map(tuple, np.round(r.vertices, 12))) == set(map(tuple, np.round(m2.vertices, 12)))


def test_refined_children_inside_parents():
    m = _FICH1
    r = refine_uniform(m)
    cell, lam = locate_points(m, r.vertices[r.cells].mean(axis=1))
    assert np.array_equal(cell, r.refinement_parent)


def test_refine_marked_empty_is_identity():
    assert refine_marked(_CUBE1, []) is _CUBE1


def test_refine_marked_all_cells_doubles():
    r = refine_marked(_CUBE1, np.arange(_CUBE1.num_cells))
    assert r.num_cells >= 2 * _CUBE1.num_cells
    assert conformity_audit(r)
    assert r.volumes().sum() == pytest.approx(1.0, abs=1e-12)


def test_refine_marked_bisects_marked():
    r = refine_marked(_FICH1, [0, 5, 17])
    parents = np.bincount(r.refinement_parent, minlength=_FICH1.num_cells)
    assert np.all(parents[[0, 5, 17]] >= 2)
    assert conformity_audit(r)


def test_refine_marked_bad_index():
    with pytest.raises(ValueError):
        refine_marked(_CUBE1, [10 ** 6])


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(0, _FICH1.num_cells - 1), min_size=1, max_size=20), st.integers(1, 3))
def test_refine_marked_random_conforming_and_nested(marked, rounds):
    m = _FICH1
    for _ in range(rounds):
        new = refine_marked(m, [c % m.num_cells for c in marked])
        assert conformity_audit(new)
        assert abs(new.volumes().sum() - 7.0) <= 1e-12
        assert np.all(new.signed_volumes() > 0)
        # new vertices are edge midpoints of the previous mesh
        vp = new.vertex_parents[m.num_vertices:]
        assert np.all(vp[:, 0] != vp[:, 1])
        m = new
    # tagged boundary facets stay on their planes
    for name, tag in FICHERA_TAGS.items():
        ax, val = int(name[1]) - 1, float(name[3:])
        assert np.allclose(m.vertices[m.facets[m.facet_tags == tag]][..., ax], val)


def test_prolongate_reproduces_linear():
    f = lambda x: 1.0 + 2 * x[:, 0] - 3 * x[:, 1] + 0.5 * x[:, 2]  # noqa: E731
    m = _FICH1
    mid = refine_marked(m, [1, 2, 3])
    fine = refine_marked(mid, [0, 7])
    vals = prolongate(fine, prolongate(mid, f(m.vertices)))
    assert np.abs(vals - f(fine.vertices)).max() <= 1e-12
    with pytest.raises(MeshError):
        prolongate(fine, f(m.vertices))
    fine = refine_uniform(m)
    assert np.abs(prolongate(fine, f(m.vertices)) - f(fine.vertices)).max() <= 1e-12


def test_prolongate_requires_history():
    with pytest.raises(MeshError):
        prolongate(_CUBE1, np.zeros(_CUBE1.num_vertices))


def test_transfer_nested_exact_on_refinement(rng):
    m = _CUBE1
    vals = rng.standard_normal(m.num_vertices)
    r1 = refine_uniform(m)
    fine = refine_uniform(r1)
    assert np.allclose(transfer_nested(m, vals, fine), prolongate(fine, prolongate(r1, vals)), atol=1e-12)
    # evaluation at a cell centroid is the vertex average
    c = m.vertices[m.cells].mean(axis=1)
    assert np.allclose(evaluate_p1(m, vals, c), vals[m.cells].mean(axis=1), atol=1e-13)


def test_locate_outside_raises():
    with pytest.raises(MeshError):
        locate_points(_FICH1, np.array([[0.5, 0.5, 0.5]]))


def test_boundary_partition():
    m = _CUBE1
    p = BoundaryPartition.from_dirichlet(m, "temperature", {1, 2})
    assert p.neumann_tags == frozenset({3, 4, 5, 6})
    p.validate(m)
    with pytest.raises(ValueError):
        BoundaryPartition("temperature", frozenset({1}), frozenset({1, 2, 3, 4, 5, 6})).validate(m)
    with pytest.raises(ValueError):
        BoundaryPartition("temperature", frozenset({1}), frozenset({2})).validate(m)
    with pytest.raises(ValueError):
        BoundaryPartition.from_dirichlet(m, "potential", set()).validate(m)


def test_summary_row():
    s = fichera_mesh(0).summary()
    assert s["vertices"] == 26 and s["cells"] == 42
    assert s["volume"] == pytest.approx(7.0)
