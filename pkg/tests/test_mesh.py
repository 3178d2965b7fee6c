import numpy as np
import pytest

from gdrom.mesh import (Mesh, MeshError, PointLocator, generate_channel_cylinder_mesh,
                        generate_rect_mesh, load_mesh, max_edge_lengths, refine,
                        save_mesh, signed_areas)


def test_minimal_split():
    mesh = generate_rect_mesh(1, 1)
    assert mesh.num_triangles == 2
    assert mesh.num_vertices == 4


def test_two_by_two_euler_formula():
    # one boundary component: E = V + T - 1
    mesh = generate_rect_mesh(2, 2)
    assert mesh.num_vertices == 9
    assert mesh.num_triangles == 8
    edges = np.concatenate([mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]],
                            mesh.triangles[:, [2, 0]]])
    edges.sort(axis=1)
    n_edges = len(np.unique(edges, axis=0))
    assert n_edges == 16
    assert n_edges == mesh.num_vertices + mesh.num_triangles - 1


def test_positive_areas_and_h():
    mesh = generate_rect_mesh(3, 5, rect=(0.0, -1.0, 2.0, 1.0))
    assert np.all(signed_areas(mesh.vertices, mesh.triangles) > 0)
    assert mesh.h == pytest.approx(max_edge_lengths(mesh.vertices, mesh.triangles).max())


def test_invalid_cell_counts():
    with pytest.raises(ValueError):
        generate_rect_mesh(0, 1)
    with pytest.raises(ValueError):
        generate_rect_mesh(2, 2, rect=(0, 0, -1, 1))


def test_boundary_tags_cover_once():
    mesh = generate_rect_mesh(2, 3)
    assert len(mesh.boundary_edges) == len(mesh.boundary_tags)
    assert set(mesh.boundary_tags) == {"wall"}
    # every boundary edge appears once
    be = np.sort(mesh.boundary_edges, axis=1)
    assert len(np.unique(be, axis=0)) == len(be)


def test_roundtrip_bit_exact(tmp_path):
    mesh = generate_rect_mesh(3, 2, rect=(0.1, 0.2, 1.7, 0.9))
    path = tmp_path / "mesh.txt"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.boundary_edges, mesh.boundary_edges)
    assert list(back.boundary_tags) == list(mesh.boundary_tags)


def test_load_single_triangle(tmp_path):
    path = tmp_path / "one.txt"
    path.write_text("gdrom-mesh 1\n3 1 3\n0 0\n1 0\n0 1\n0 1 2\n0 1 wall\n1 2 wall\n2 0 wall\n")
    mesh = load_mesh(path)
    assert mesh.num_triangles == 1


def test_load_reports_bad_vertex_index(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("gdrom-mesh 1\n3 1 0\n0 0\n1 0\n0 1\n0 1 99\n")
    with pytest.raises(MeshError, match=r"bad.txt:6.*out of range"):
        load_mesh(path)


def test_load_rejects_bad_header(tmp_path):
    path = tmp_path / "hdr.txt"
    path.write_text("not-a-mesh 1\n")
    with pytest.raises(MeshError, match="hdr.txt:1"):
        load_mesh(path)


def test_load_rejects_degenerate_triangle(tmp_path):
    path = tmp_path / "flat.txt"
    path.write_text("gdrom-mesh 1\n3 1 0\n0 0\n1 0\n2 0\n0 1 2\n")
    with pytest.raises(MeshError, match="degenerate"):
        load_mesh(path)


def test_constructor_rejects_unknown_tag():
    mesh = generate_rect_mesh(1, 1)
    with pytest.raises(MeshError):
        Mesh(mesh.vertices, mesh.triangles, mesh.boundary_edges,
             np.asarray(["slippery"] * len(mesh.boundary_edges)))


def test_refine_quarters_diameter_and_inherits_tags():
    mesh = generate_rect_mesh(2, 2)
    fine = refine(refine(mesh))
    assert fine.num_triangles == 16 * mesh.num_triangles
    assert fine.h == pytest.approx(mesh.h / 4.0)
    assert set(fine.boundary_tags) == {"wall"}
    assert len(fine.boundary_edges) == 4 * len(mesh.boundary_edges)


def test_point_locator_barycentric():
    mesh = generate_rect_mesh(4, 4)
    loc = PointLocator(mesh)
    rng = np.random.default_rng(7)
    pts = rng.uniform(0.05, 0.95, size=(40, 2))
    tri, bary = loc.locate(pts)
    rec = np.einsum("nk,nkc->nc", bary, mesh.vertices[mesh.triangles[tri]])
    assert np.abs(rec - pts).max() < 1e-12
    assert np.all(bary > -1e-12)


def test_point_locator_rejects_outside():
    mesh = generate_rect_mesh(2, 2)
    with pytest.raises(MeshError, match="outside"):
        PointLocator(mesh).locate(np.array([[3.0, 3.0]]))


def test_cylinder_channel_geometry():
    mesh = generate_channel_cylinder_mesh(1)
    tags = set(mesh.boundary_tags)
    assert tags == {"inflow", "outflow", "wall", "cylinder"}
    assert np.all(signed_areas(mesh.vertices, mesh.triangles) > 0)
    # the hole boundary sits on the circle
    cyl = mesh.boundary_tags == "cylinder"
    nodes = np.unique(mesh.boundary_edges[cyl])
    r = np.hypot(mesh.vertices[nodes, 0] - 0.2, mesh.vertices[nodes, 1] - 0.2)
    assert np.abs(r - 0.05).max() < 1e-12
