import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from ckn_varcrit import build_disk_mesh, build_polygon_mesh, disk_mesh_level, mesh_statistics, read_mesh, refine, write_mesh
from ckn_varcrit.mesh import prolongation


@pytest.mark.parametrize("level, grading", [(1, 1.0), (3, 1.0), (3, 2.0), (4, 2.0)])
def test_conforming_and_oriented(level, grading):
    m = disk_mesh_level(1.0, level, grading)
    assert np.all(m.signed_areas() > 0)
    edges, counts = m.edges()
    assert set(np.unique(counts)) <= {1, 2}
    on_bnd = np.zeros(m.n_vertices, bool)
    on_bnd[edges[counts == 1].ravel()] = True
    np.testing.assert_array_equal(on_bnd, m.boundary)
    r = np.hypot(*m.vertices[m.boundary].T)
    np.testing.assert_allclose(r, 1.0, atol=1e-14)
    # Euler characteristic of a disk
    assert m.n_vertices - len(edges) + m.n_triangles == 1
    assert m.n_triangles == 8 * 9 * 4 ** (level - 1)


def test_origin_is_an_interior_vertex():
    m = disk_mesh_level(1.0, 3, 2.0)
    assert np.all(m.vertices[m.origin_index] == 0.0)
    assert not m.boundary[m.origin_index]


def test_area_converges_quadratically():
    errs = [abs(mesh_statistics(disk_mesh_level(1.0, L)).area - math.pi) for L in (2, 3, 4)]
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_grading_concentrates_near_origin():
    uni = mesh_statistics(disk_mesh_level(1.0, 3, 1.0))
    gra = mesh_statistics(disk_mesh_level(1.0, 3, 2.0))
    assert gra.origin_gap < uni.origin_gap / 2
    assert gra.min_angle > 10.0 and uni.min_angle > 30.0


def test_refinement_halves_h():
    a, b = (mesh_statistics(disk_mesh_level(1.0, L)) for L in (3, 4))
    assert b.h_max == pytest.approx(a.h_max / 2, rel=0.05)


def test_dihedral_symmetry():
    m = disk_mesh_level(1.0, 3, 2.0)
    v = m.vertices
    tris = {tuple(sorted(t)) for t in m.triangles.tolist()}
    c, s = math.cos(math.pi / 4), math.sin(math.pi / 4)
    maps = {"rot45": v @ np.array([[c, s], [-s, c]]), "flip_y": v * [1, -1], "swap": v[:, ::-1]}
    tree = cKDTree(v)
    for name, w in maps.items():
        d, idx = tree.query(w)
        assert d.max() < 1e-12, name
        assert {tuple(sorted(idx[t])) for t in m.triangles.tolist()} == tris, name


def test_refine_keeps_parent_vertices_and_prolongation():
    m = build_disk_mesh(1.0, 3, 1.0)
    f = refine(m)
    np.testing.assert_array_equal(f.vertices[: m.n_vertices], m.vertices)
    P = prolongation(m)
    x = np.random.default_rng(0).standard_normal(m.n_vertices)
    x[m.boundary] = 0.0
    y = P @ x
    np.testing.assert_array_equal(y[: m.n_vertices], x)
    assert np.all(y[f.boundary] == 0.0)


def test_mesh_file_roundtrip(tmp_path):
    m = disk_mesh_level(1.0, 2, 2.0)
    path = tmp_path / "mesh.txt"
    write_mesh(m, path)
    text = path.read_text()
    assert text.startswith(f"POINTS {m.n_vertices}\n")
    assert f"TRIANGLES {m.n_triangles}" in text
    back = read_mesh(path, radius=1.0)
    np.testing.assert_array_equal(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.boundary, m.boundary)


def test_polygon_mesh():
    m = build_polygon_mesh([(1, 0), (0, 1), (-1, 0), (0, -1)])
    assert mesh_statistics(m).area == pytest.approx(2.0)
    f = refine(refine(m))
    assert mesh_statistics(f).area == pytest.approx(2.0)
    with pytest.raises(ValueError):
        build_polygon_mesh([(1, 1), (2, 1), (2, 2)])


def test_bad_level():
    with pytest.raises(ValueError):
        disk_mesh_level(1.0, 0)
