import numpy as np
import pytest

from conicfem import mesh as msh
from conicfem.geometry import eval_conic
from conicfem.mesh import BUFFER, ORDINARY, PIE, MeshError, refine_uniform
from conicfem.problems import builtin_domain, disk_domain, disk_wheel_points


def test_disk_classification(disk_mesh):
    counts = {k: len(disk_mesh.triangles_of_kind(k)) for k in (ORDINARY, BUFFER, PIE)}
    assert counts == {ORDINARY: 8, BUFFER: 8, PIE: 8}
    # all boundary vertices have a tangent (single conic everywhere)
    assert all(disk_mesh.vertex_tangent[v] for v in disk_mesh.boundary_vertices())
    # pie slot conventions: interior vertex first, boundary pair after
    for t in disk_mesh.triangles_of_kind(PIE):
        rec = disk_mesh.triangles[t]
        assert not disk_mesh.vertex_is_boundary[rec.verts[0]]
        assert disk_mesh.vertex_is_boundary[rec.verts[1]]
        assert disk_mesh.vertex_is_boundary[rec.verts[2]]
    for t in disk_mesh.triangles_of_kind(BUFFER):
        rec = disk_mesh.triangles[t]
        assert disk_mesh.vertex_is_boundary[rec.verts[0]]


def test_euler_relation(disk_mesh, disk_mesh2, ellipse_mesh, lens_mesh):
    for m in (disk_mesh, disk_mesh2, ellipse_mesh, lens_mesh):
        assert m.n_vertices - len(m.edges) + m.n_triangles == 1


def test_condition_c_rejected():
    # a single-interior-vertex fan on the disk: every triangle is pie-shaped,
    # so adjacent pies share straight edges
    dom = disk_domain()
    verts = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0), (0.1, 0.05)]
    tris = [(k, (k + 1) % 4, 4) for k in range(4)]
    boundary = [(k, (k + 1) % 4, k) for k in range(4)]
    with pytest.raises(MeshError) as err:
        msh.classify_and_validate(dom, verts, tris, boundary)
    assert err.value.condition == "c"


def test_condition_b_rejected(disk_mesh):
    # connect two boundary vertices by an interior edge
    dom = disk_mesh.domain
    ang = [np.pi * k / 4 for k in range(8)]
    b = [(np.cos(t), np.sin(t)) for t in ang]
    verts = list(b) + [(0.0, 0.0)]
    tris = [(k, (k + 1) % 8, 8) for k in range(8)]
    boundary = [(k, (k + 1) % 8, k // 2) for k in range(8)]
    with pytest.raises(MeshError) as err:
        msh.classify_and_validate(dom, verts, tris, boundary)
    assert err.value.condition in ("b", "c")


def test_condition_e_rejected(disk_mesh):
    # push one pie interior vertex outside the disk: the conic goes negative
    dom = disk_mesh.domain
    pts, arcs = disk_wheel_points()
    verts = np.array(pts + [tuple(0.55 * np.array([np.cos(t + np.pi / 8),
                                                   np.sin(t + np.pi / 8)]))
                            for t in [np.pi * k / 4 for k in range(8)]] + [(0, 0)])
    verts[8] = 1.2 * verts[8] / np.linalg.norm(verts[8]) * 2.2
    tris, boundary = [], []
    n = 8
    for i in range(n):
        j = (i + 1) % n
        tris += [(n + i, i, j), (i, n + (i - 1) % n, n + i),
                 (2 * n, n + (i - 1) % n, n + i)]
        boundary.append((i, j, arcs[i]))
    with pytest.raises(MeshError) as err:
        msh.classify_and_validate(dom, verts, tris, boundary)
    assert err.value.condition in ("d", "e")


def test_refine_counts_and_midpoints(disk_mesh, disk_mesh2):
    assert disk_mesh2.n_triangles == 4 * disk_mesh.n_triangles
    for rec in disk_mesh2.edges:
        if rec.arc is not None:
            conic = disk_mesh2.domain.arcs[rec.arc].conic
            for v in rec.verts:
                assert abs(eval_conic(conic, disk_mesh2.vertices[v])) < 1e-13
    kinds2 = {k: len(disk_mesh2.triangles_of_kind(k)) for k in (ORDINARY, BUFFER, PIE)}
    assert kinds2[PIE] == 16 and kinds2[BUFFER] == 16


def test_refine_straight_midpoint_rule():
    # an ordinary parent spawns children at the three edge midpoints
    dom, mesh = builtin_domain("disk")
    fine = refine_uniform(mesh)
    t = mesh.triangles_of_kind(ORDINARY)[0]
    tri = mesh.tri_coords(t)
    mids = {tuple(np.round(0.5 * (tri[i] + tri[j]), 12))
            for i in range(3) for j in range(i + 1, 3)}
    children = [c for c in range(fine.n_triangles) if fine.parents[c] == t]
    assert len(children) == 4
    child_verts = set()
    for c in children:
        for v in fine.triangles[c].verts:
            child_verts.add(tuple(np.round(fine.vertices[v], 12)))
    assert mids <= child_verts


def test_refine_pie_curved_midpoint():
    dom, mesh = builtin_domain("disk")
    fine = refine_uniform(mesh)
    t = mesh.triangles_of_kind(PIE)[0]
    v1, v2, v3 = (mesh.vertices[i] for i in mesh.triangles[t].verts)
    chord_mid = 0.5 * (v2 + v3)
    direction = chord_mid - v1
    # the curved-edge midpoint lies on the ray from the interior vertex
    children = [c for c in range(fine.n_triangles) if fine.parents[c] == t]
    new_bd = [v for c in children for v in fine.triangles[c].verts
              if fine.vertex_is_boundary[v]
              and not any(np.allclose(fine.vertices[v], p) for p in (v2, v3))]
    x = fine.vertices[new_bd[0]]
    cross = (x - v1)[0] * direction[1] - (x - v1)[1] * direction[0]
    assert abs(cross) < 1e-12
    assert abs(np.linalg.norm(x) - 1.0) < 1e-13


def test_refinement_preserves_conditions_deep():
    # six levels on the disk and the ellipse, five on the C2 domain
    for pid, levels in (("disk", 6), ("ellipse-exp", 6), ("c2-domain", 5)):
        _, mesh = builtin_domain(pid)
        for _ in range(levels - 1):
            mesh = refine_uniform(mesh, star_samples=10)
        assert mesh.level == levels
        assert mesh.n_vertices - len(mesh.edges) + mesh.n_triangles == 1


def test_star_properties(disk_mesh):
    v = disk_mesh.interior_vertices()[0]
    st1 = disk_mesh.star([("v", v)])
    assert st1 == set(disk_mesh.vertex_triangles(v))
    t0 = 0
    assert t0 in disk_mesh.star([t0])
    rng = np.random.default_rng(0)
    for _ in range(20):
        t = int(rng.integers(disk_mesh.n_triangles))
        s1 = disk_mesh.star([t])
        s2 = disk_mesh.star([t], level=2)
        assert s1 <= s2
    e = disk_mesh.interior_edges()[0]
    se = disk_mesh.star([("e", e)])
    assert set(disk_mesh.edges[e].tris) <= se


def test_corner_vertices_with_straight_angle_in_tangent_set(disk_mesh):
    # the disk's four arc corners have interior angle pi and stay tangent
    for j, z in enumerate(disk_mesh.domain.corners):
        d = np.linalg.norm(disk_mesh.vertices - z, axis=1)
        v = int(np.argmin(d))
        assert disk_mesh.vertex_tangent[v]


def test_lens_corners_not_tangent(lens_mesh):
    corners = lens_mesh.domain.corners
    flags = []
    for z in corners:
        d = np.linalg.norm(lens_mesh.vertices - z, axis=1)
        flags.append(bool(lens_mesh.vertex_tangent[int(np.argmin(d))]))
    assert flags == [False, False]
    others = [v for v in lens_mesh.boundary_vertices()
              if not any(np.allclose(lens_mesh.vertices[v], z) for z in corners)]
    assert all(lens_mesh.vertex_tangent[v] for v in others)


def test_mesh_file_roundtrip(tmp_path, disk_mesh):
    path = tmp_path / "disk_mesh.json"
    msh.save_mesh(disk_mesh, path)
    again = msh.load_mesh(path)
    assert again.n_triangles == disk_mesh.n_triangles
    assert [r.kind for r in again.triangles] == [r.kind for r in disk_mesh.triangles]


def test_boundary_mismatch_reported(tmp_path, disk_mesh):
    data = msh.mesh_to_dict(disk_mesh)
    data["boundary"] = data["boundary"][:-1]
    with pytest.raises(MeshError):
        msh.mesh_from_dict(data)
