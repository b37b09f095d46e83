import numpy as np
import pytest
from scipy.spatial import Delaunay

from grfem.mesh import (
    Mesh,
    MeshError,
    MeshPattern,
    generate_disk,
    generate_lshape,
    generate_uniform,
    load_mesh,
    refine_regular,
    write_mesh,
)


@pytest.mark.parametrize(
    "pattern, n, nv, nt",
    [("regular", 2, 9, 8), ("chevron", 2, 9, 8), ("unionjack", 2, 9, 8), ("crisscross", 2, 13, 16)],
)
def test_uniform_counts(pattern, n, nv, nt):
    m = generate_uniform(pattern, n)
    assert (m.n_vertices, m.n_triangles) == (nv, nt)
    m.validate()


@pytest.mark.parametrize(
    "pattern, dofs",
    [
        ("regular", [1089, 4225, 16641, 66049]),
        ("chevron", [1089, 4225, 16641, 66049]),
        ("unionjack", [1089, 4225, 16641, 66049]),
        ("crisscross", [2113, 8321, 33025, 131585]),
    ],
)
def test_table_dof_counts(pattern, dofs):
    assert [generate_uniform(pattern, 32 * 2**k).n_vertices for k in range(4)] == dofs


def test_uniform_rejects_bad_n():
    with pytest.raises(ValueError):
        generate_uniform("regular", 1)
    with pytest.raises(ValueError):
        generate_uniform("disk", 4)


def test_lshape_counts():
    m = generate_lshape(2)
    assert (m.n_vertices, m.n_triangles) == (8, 6)
    assert generate_lshape(16).n_vertices == 225
    assert refine_regular(generate_lshape(16)).n_vertices == 833
    assert np.isclose(generate_lshape(8).areas.sum(), 3.0)


def test_disk():
    m = generate_disk(1)
    assert (m.n_vertices, m.n_triangles) == (7, 6)
    for level in range(3):
        r = np.linalg.norm(m.vertices[m.boundary_vertices], axis=1)
        assert np.abs(r - 1).max() < 1e-14
        m.validate()
        m = refine_regular(m, project_boundary=True)


def test_disk_normals_are_radial():
    m = refine_regular(generate_disk(4), project_boundary=True)
    for v, info in m.frames.items():
        assert not info.corner
        p = m.vertices[v]
        assert np.abs(info.normal - p / np.linalg.norm(p)).max() < 1e-12


def test_refine_counts_and_h():
    m = generate_uniform("regular", 2)
    r = refine_regular(m)
    assert r.n_vertices == 25
    assert np.isclose(r.h_max, m.h_max / 2)
    assert np.isclose(r.areas.sum(), 1.0)


def test_refine_delaunay_adds_edge_midpoints(rng):
    pts = np.vstack([rng.random((200, 2)), [[0, 0], [1, 0], [0, 1], [1, 1]]])
    tri = Delaunay(pts)
    m = Mesh(pts, tri.simplices[:, :], MeshPattern.IMPORTED)
    # scipy may return either orientation
    flip = m.signed_areas < 0
    t = m.triangles.copy()
    t[flip] = t[flip][:, [0, 2, 1]]
    m = Mesh(pts, t)
    r = refine_regular(m)
    assert r.n_vertices == m.n_vertices + m.n_edges
    assert r.n_triangles == 4 * m.n_triangles


def test_frames_unit_square():
    m = generate_uniform("regular", 4)
    idx = {tuple(np.round(p, 12)): i for i, p in enumerate(m.vertices)}
    mid = m.frames[idx[(0.5, 0.0)]]
    assert not mid.corner
    assert np.allclose(mid.normal, [0, -1])
    assert np.allclose(np.abs(mid.tangent), [1, 0])
    corner = m.frames[idx[(0.0, 0.0)]]
    assert corner.corner
    normals = sorted(tuple(np.round(f.normal, 12)) for f in corner.frames)
    assert normals == [(-1.0, 0.0), (0.0, -1.0)]


def _write(tmp_path, node, ele):
    (tmp_path / "m.node").write_text(node)
    (tmp_path / "m.ele").write_text(ele)
    return tmp_path / "m"


def test_load_single_triangle(tmp_path):
    stem = _write(tmp_path, "3 2 0 0\n1 0 0\n2 1 0\n3 0 1\n", "1 3 0\n1 1 2 3\n")
    m = load_mesh(stem)
    assert len(m.boundary_edges) == 3


def test_load_reorients_clockwise(tmp_path):
    stem = _write(tmp_path, "3 2\n0 0 0\n1 1 0\n2 0 1\n", "1 3\n0 0 2 1\n")
    m = load_mesh(str(stem) + ".ele")
    assert m.signed_areas[0] > 0


def test_load_duplicate_triangle(tmp_path):
    stem = _write(
        tmp_path,
        "4 2\n0 0 0\n1 1 0\n2 0 1\n3 1 1\n",
        "3 3\n0 0 1 2\n1 1 3 2\n2 0 1 2\n",
    )
    with pytest.raises(MeshError, match="nonconforming"):
        load_mesh(stem)


def test_load_malformed(tmp_path):
    stem = _write(tmp_path, "3 2\n0 0 0\n1 x 0\n2 0 1\n", "1 3\n0 0 1 2\n")
    with pytest.raises(MeshError, match="m.node:3"):
        load_mesh(stem)


def test_write_load_roundtrip(tmp_path):
    m = generate_uniform("chevron", 3)
    write_mesh(m, tmp_path / "c")
    back = load_mesh(tmp_path / "c")
    assert np.array_equal(back.triangles, m.triangles)
    assert np.allclose(back.vertices, m.vertices)
