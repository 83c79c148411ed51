import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ncstokes.mesh import (
    DegenerateCellError,
    Mesh,
    build_structured_unit_square,
    mesh_stats,
    read_mesh,
    write_mesh,
)

from conftest import perturbed_mesh


def test_smallest_mesh_counts():
    m = build_structured_unit_square(1)
    assert (m.n_vertices, m.n_cells, m.n_facets) == (4, 2, 5)
    assert m.boundary_facets.sum() == 4


def test_two_by_two_counts():
    m = build_structured_unit_square(2)
    assert (m.n_vertices, m.n_cells, m.n_facets) == (9, 8, 16)
    assert (~m.boundary_facets).sum() == 8


def test_grid_spacing_n20():
    m = build_structured_unit_square(20)
    assert m.h_grid == pytest.approx(5.00e-2, abs=1e-15)
    assert mesh_stats(m).h_max == pytest.approx(math.sqrt(2) / 20, rel=1e-13)


def test_invalid_n():
    with pytest.raises(ValueError):
        build_structured_unit_square(0)


def test_diagonal_split_direction():
    m = build_structured_unit_square(1)
    diag = {tuple(sorted(f)) for f in m.facets[~m.boundary_facets]}
    # vertex 0 is (0,0), vertex 3 is (1,1)
    assert diag == {(0, 3)}


def test_barycentric_examples(mesh2):
    l = 3
    S = mesh2.vertices[mesh2.cells[l]]
    np.testing.assert_allclose(mesh2.barycentric_coords(l, S.mean(axis=0)), [1 / 3] * 3, atol=1e-14)
    np.testing.assert_allclose(mesh2.barycentric_coords(l, S[0]), [1, 0, 0], atol=1e-14)
    np.testing.assert_allclose(mesh2.barycentric_coords(l, 0.5 * (S[0] + S[1])), [0.5, 0.5, 0], atol=1e-14)


def test_reference_cell_identity_map():
    m = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    T = m.affine_map(0)
    np.testing.assert_array_equal(T.matrix, np.eye(2))
    np.testing.assert_array_equal(T.offset, [0, 0])
    assert T.determinant == 1.0


def test_stretched_cell_determinant():
    m = Mesh([[0, 0], [1, 0], [0, 2]], [[0, 1, 2]])
    assert m.affine_map(0).determinant == pytest.approx(2.0, rel=1e-15)
    assert m.area[0] == pytest.approx(1.0, rel=1e-15)


def test_n_theta():
    assert mesh_stats(build_structured_unit_square(1)).n_theta == 2
    for n in (2, 3, 7):
        assert mesh_stats(build_structured_unit_square(n)).n_theta == 6


def test_sigma_right_isosceles():
    m = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    expected = math.sqrt(2) / (1 - 1 / math.sqrt(2))
    assert m.cell(0).sigma == pytest.approx(expected, rel=1e-13)
    assert mesh_stats(m).sigma == pytest.approx(4.828, abs=1e-3)


def test_degenerate_and_clockwise_rejected():
    with pytest.raises(DegenerateCellError):
        Mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])
    with pytest.raises(DegenerateCellError):
        Mesh([[0, 0], [0, 1], [1, 0]], [[0, 1, 2]])


def test_entity_views(mesh2):
    for f in range(mesh2.n_facets):
        F = mesh2.facet(f)
        assert F.is_boundary == bool(mesh2.boundary_facets[f])
        if not F.is_boundary:
            assert F.left_cell < F.right_cell
        n = np.array(F.normal)
        d = np.subtract(*mesh2.vertices[list(F.vertex_ids)])
        assert abs(np.linalg.norm(n) - 1) < 1e-14
        assert abs(n @ d) < 1e-14
        # outward from the left cell
        assert n @ (np.array(F.barycenter) - mesh2.cell_centroid[F.left_cell]) > 0
    for i in range(mesh2.n_vertices):
        V = mesh2.vertex(i)
        on = min(V.coords[0], V.coords[1], 1 - V.coords[0], 1 - V.coords[1]) < 1e-14
        assert V.on_boundary == on


def test_cell_facets_are_opposite(mesh4):
    for l in range(mesh4.n_cells):
        C = mesh4.cell(l)
        for i, f in enumerate(C.facet_ids):
            assert C.vertex_ids[i] not in mesh4.facets[f]


mesh_args = st.tuples(st.integers(1, 6), st.integers(0, 2**31 - 1))


def _mesh(args):
    n, seed = args
    return perturbed_mesh(n, seed) if n > 1 else build_structured_unit_square(1)


@given(mesh_args)
def test_euler_and_area(args):
    m = _mesh(args)
    assert m.n_vertices - m.n_facets + m.n_cells == 1
    assert abs(m.area.sum() - 1.0) < 1e-12
    counts = np.bincount(m.cell_facets.ravel(), minlength=m.n_facets)
    np.testing.assert_array_equal(counts, np.where(m.boundary_facets, 1, 2))


@given(mesh_args)
def test_scaled_normals_close(args):
    m = _mesh(args)
    for l in range(m.n_cells):
        F = m.cell_facets[l]
        n = m.facet_normal[F] * np.where(m.facet_cells[F, 0] == l, 1.0, -1.0)[:, None]
        assert np.abs((m.facet_length[F, None] * n).sum(axis=0)).max() < 1e-13


@given(mesh_args, st.floats(0, 1), st.floats(0, 1))
def test_affine_map_roundtrip(args, s, t):
    m = _mesh(args)
    xhat = np.array([s, t]) * (1 - 1e-9) / max(1.0, s + t)
    for l in range(m.n_cells):
        T = m.affine_map(l)
        assert abs(abs(T.determinant) / m.area[l] - 2.0) < 1e-13
        x = T(xhat)
        np.testing.assert_allclose(T(m.inverse_map(l, x)), x, atol=1e-13)
        np.testing.assert_allclose(m.inverse_map(l, m.vertices[m.cells[l]]),
                                   [[0, 0], [1, 0], [0, 1]], atol=1e-13)
        lam = m.barycentric_coords(l, x)
        assert abs(lam.sum() - 1) < 1e-13
        np.testing.assert_allclose(lam, [1 - xhat.sum(), *xhat], atol=1e-13)
        assert m.cell(l).sigma > 2


@given(mesh_args)
def test_stats_invariants(args):
    m = _mesh(args)
    s = mesh_stats(m)
    assert s.h_max >= s.h_grid
    assert s == mesh_stats(m)


def test_write_read_roundtrip(tmp_path):
    m = perturbed_mesh(3, 7)
    path = tmp_path / "mesh.txt"
    write_mesh(m, path)
    assert path.read_text().splitlines()[0] == f"vertices {m.n_vertices} cells {m.n_cells}"
    back = read_mesh(path)
    np.testing.assert_array_equal(back.cells, m.cells)
    np.testing.assert_allclose(back.vertices, m.vertices, rtol=1e-15)


def test_read_bad_header(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("points 3\n")
    with pytest.raises(ValueError):
        read_mesh(p)


def test_immutable(mesh2):
    with pytest.raises(ValueError):
        mesh2.vertices[0, 0] = 5.0
