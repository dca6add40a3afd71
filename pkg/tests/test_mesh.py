"""Mesh I/O, boundary extraction, mass lumping."""

import numpy as np
import pytest

from tetipc.mesh import (
    MeshError,
    Scene,
    compute_lumped_masses,
    extract_boundary,
    load_obj_surface,
    load_tet_mesh,
    tet_volumes,
)
from tetipc.scenes import box_5tet, icosphere, regular_tet, write_node_ele, write_obj


@pytest.fixture
def tet_files(tmp_path):
    v, t = regular_tet(1.0)
    base = str(tmp_path / "tet")
    write_node_ele(base, v, t)
    return base + ".node", base + ".ele"


class TestTetLoading:
    def test_single_tet_counts(self, tet_files):
        mesh = load_tet_mesh(*tet_files)
        assert mesh.surface_tris.shape[0] == 4
        assert mesh.surface_edges.shape[0] == 6
        assert mesh.surface_verts.shape[0] == 4
        assert mesh.rest_volumes.shape == (1,)

    def test_two_tets_shared_face_hidden(self, tmp_path):
        v = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [1.0, 1.0, 1.0]])
        t = np.array([[0, 1, 2, 3], [1, 2, 3, 4]], dtype=np.int64)
        base = str(tmp_path / "two")
        write_node_ele(base, v, t)
        mesh = load_tet_mesh(base + ".node", base + ".ele")
        assert mesh.surface_tris.shape[0] == 6
        keys = {tuple(sorted(tri)) for tri in mesh.surface_tris}
        assert (1, 2, 3) not in keys

    def test_cube_boundary_matches_face_count_oracle(self, tmp_path):
        v, t = box_5tet(1.0, 1.0, 1.0)
        base = str(tmp_path / "cube")
        write_node_ele(base, v, t)
        mesh = load_tet_mesh(base + ".node", base + ".ele")
        # brute-force oracle: faces appearing in exactly one tet
        from collections import Counter

        count = Counter()
        for tet in t:
            for f in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
                count[tuple(sorted(tet[list(f)]))] += 1
        expected = {k for k, n in count.items() if n == 1}
        assert mesh.surface_tris.shape[0] == 12
        assert {tuple(sorted(tri)) for tri in mesh.surface_tris} == expected

    def test_one_based_indices(self, tmp_path):
        v, t = regular_tet(1.0)
        base = str(tmp_path / "one")
        with open(base + ".node", "w") as fh:
            fh.write(f"{len(v)} 3 0 0\n")
            for i, p in enumerate(v):
                fh.write(f"{i + 1} {p[0]} {p[1]} {p[2]}\n")
        with open(base + ".ele", "w") as fh:
            fh.write(f"{len(t)} 4 0\n")
            for i, tt in enumerate(t):
                fh.write(f"{i + 1} {tt[0] + 1} {tt[1] + 1} {tt[2] + 1} {tt[3] + 1}\n")
        mesh = load_tet_mesh(base + ".node", base + ".ele")
        assert mesh.surface_tris.shape[0] == 4

    def test_inverted_tet_reordered(self, tmp_path):
        v, t = regular_tet(1.0)
        t = t[:, [0, 1, 3, 2]]  # flip orientation
        base = str(tmp_path / "flip")
        write_node_ele(base, v, t)
        mesh = load_tet_mesh(base + ".node", base + ".ele")
        assert tet_volumes(mesh.vertices, mesh.tets).min() > 0

    def test_degenerate_tet_rejected(self, tmp_path):
        v = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0.5, 0.5, 0.0]])
        t = np.array([[0, 1, 2, 3]], dtype=np.int64)
        base = str(tmp_path / "degen")
        write_node_ele(base, v, t)
        with pytest.raises(MeshError, match="degenerate tet 0"):
            load_tet_mesh(base + ".node", base + ".ele")

    def test_boundary_extraction_idempotent(self):
        v, t = box_5tet()
        tris = extract_boundary(t)
        again = extract_boundary(t)
        np.testing.assert_array_equal(tris, again)


class TestObjLoading:
    def test_one_triangle(self, tmp_path):
        path = str(tmp_path / "tri.obj")
        write_obj(path, np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))
        mesh = load_obj_surface(path)
        assert mesh.surface_tris.shape[0] == 1
        assert mesh.surface_edges.shape[0] == 3
        assert mesh.surface_verts.shape[0] == 3
        assert mesh.tets.size == 0
        assert mesh.is_fixed.all()

    def test_quad_rejected(self, tmp_path):
        path = str(tmp_path / "quad.obj")
        with open(path, "w") as fh:
            fh.write("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        with pytest.raises(MeshError, match="non-triangle"):
            load_obj_surface(path)

    def test_icosphere_euler_formula(self, tmp_path):
        v, f = icosphere(1, 0.5)
        path = str(tmp_path / "ico.obj")
        write_obj(path, v, f)
        mesh = load_obj_surface(path)
        nv = mesh.surface_verts.shape[0]
        ne = mesh.surface_edges.shape[0]
        nf = mesh.surface_tris.shape[0]
        assert (nf, ne, nv) == (80, 120, 42)
        assert nv - ne + nf == 2

    def test_moving_obj_gets_area_masses(self, tmp_path):
        path = str(tmp_path / "tri.obj")
        write_obj(path, np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))
        mesh = load_obj_surface(path, fixed=False, area_density=6.0)
        np.testing.assert_allclose(mesh.vertex_mass, 6.0 * 0.5 / 3.0)


class TestMasses:
    def test_unit_volume_equal_split(self, tmp_path):
        v = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 6.0]])
        t = np.array([[0, 1, 2, 3]], dtype=np.int64)  # volume 1
        base = str(tmp_path / "unit")
        write_node_ele(base, v, t)
        mesh = load_tet_mesh(base + ".node", base + ".ele")
        masses = compute_lumped_masses(mesh, 1000.0)
        np.testing.assert_allclose(masses, 250.0, rtol=1e-12)

    def test_shared_face_additivity(self, tmp_path):
        v = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [1.0, 1.0, 1.0]])
        t = np.array([[0, 1, 2, 3], [1, 2, 3, 4]], dtype=np.int64)
        base = str(tmp_path / "two")
        write_node_ele(base, v, t)
        mesh = load_tet_mesh(base + ".node", base + ".ele")
        rho = 700.0
        masses = compute_lumped_masses(mesh, rho)
        vols = mesh.rest_volumes
        np.testing.assert_allclose(masses[0], rho * vols[0] / 4.0, rtol=1e-12)
        np.testing.assert_allclose(masses[1], rho * (vols[0] + vols[1]) / 4.0, rtol=1e-12)

    def test_total_mass_conservation(self, tmp_path):
        v, t = box_5tet(1.0, 1.0, 1.0)
        base = str(tmp_path / "cube")
        write_node_ele(base, v, t)
        mesh = load_tet_mesh(base + ".node", base + ".ele")
        masses = compute_lumped_masses(mesh, 1.0)
        assert masses.sum() == pytest.approx(1.0, rel=1e-12)  # unit cube volume

    def test_requires_positive_density(self, tmp_path):
        v, t = regular_tet()
        base = str(tmp_path / "t")
        write_node_ele(base, v, t)
        mesh = load_tet_mesh(base + ".node", base + ".ele")
        with pytest.raises(MeshError):
            compute_lumped_masses(mesh, 0.0)


class TestScene:
    def test_bbox_diagonal_and_packing(self, tmp_path):
        v, t = regular_tet(1.0)
        base = str(tmp_path / "t")
        write_node_ele(base, v, t)
        m1 = load_tet_mesh(base + ".node", base + ".ele")
        m1.vertex_mass = compute_lumped_masses(m1, 1000.0)
        m2 = m1.transformed(translate=[0, 0, 2.0])
        scene = Scene.build([m1, m2])
        assert scene.positions.shape == (8, 3)
        assert scene.tets.shape == (2, 4)
        assert scene.tets[1].min() >= 4
        lo = scene.positions.min(axis=0)
        hi = scene.positions.max(axis=0)
        assert scene.bbox_diagonal == pytest.approx(np.linalg.norm(hi - lo))
