import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from pnp_afem.mesh import (DIRICHLET, MeshError, bisect, build_mesh, check_mesh, domain_mesh, read_mesh,
                           uniform_refine, write_mesh)

SQUARE_V = [(0, 0), (1, 0), (1, 1), (0, 1)]
SQUARE_T = [(0, 1, 2), (0, 2, 3)]
L_SHAPE_V = [(-1, -1), (0, -1), (-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
L_SHAPE_T = [(0, 1, 3), (0, 3, 2), (2, 3, 6), (2, 6, 5), (3, 4, 7), (3, 7, 6)]


def n_boundary_edges(mesh):
    return int(np.sum(mesh.boundary_flags == DIRICHLET))


def test_unit_square_counts():
    m = build_mesh(SQUARE_V, SQUARE_T)
    assert (m.n_vertices, m.n_triangles, m.n_edges, n_boundary_edges(m)) == (4, 2, 5, 4)
    check_mesh(m, 1.0)


def test_empty_mesh_rejected():
    with pytest.raises(MeshError, match="empty mesh"):
        build_mesh(SQUARE_V, np.zeros((0, 3), dtype=int))


def test_l_shape_counts():
    m = build_mesh(L_SHAPE_V, L_SHAPE_T)
    assert (m.n_vertices, m.n_triangles, m.n_edges, n_boundary_edges(m)) == (8, 6, 13, 8)
    assert m.area == pytest.approx(3.0, rel=1e-14)
    check_mesh(m, 3.0)


def test_degenerate_and_clockwise_rejected():
    with pytest.raises(MeshError, match="degenerate triangle 0"):
        build_mesh([(0, 0), (1, 0), (2, 0)], [(0, 1, 2)])
    with pytest.raises(MeshError, match="clockwise"):
        build_mesh(SQUARE_V, [(0, 2, 1)])


def test_nonmanifold_edge_rejected():
    v = [(0, 0), (1, 0), (0.5, 1), (0.5, -1), (0.6, 2)]
    with pytest.raises(MeshError):
        build_mesh(v, [(0, 1, 2), (1, 0, 3), (0, 1, 4)])


def test_index_out_of_range_rejected():
    with pytest.raises(MeshError):
        build_mesh(SQUARE_V, [(0, 1, 7)])


def test_initial_refinement_edge_is_longest():
    m = build_mesh(SQUARE_V, SQUARE_T)
    for t in range(2):
        k = m.refinement_edge[t]
        assert m.edge_lengths[t, k] == pytest.approx(np.sqrt(2))


@pytest.mark.parametrize("kind,k,nt,area", [("unit_square", 1, 2, 1.0), ("unit_square", 2, 8, 1.0),
                                            ("l_shape", 1, 6, 3.0), ("l_shape", 2, 24, 3.0)])
def test_domain_mesh(kind, k, nt, area):
    m = domain_mesh(kind, k)
    assert m.n_triangles == nt
    check_mesh(m, area)


def test_domain_mesh_rejects_bad_input():
    with pytest.raises(MeshError):
        domain_mesh("disc", 1)
    with pytest.raises(MeshError):
        domain_mesh("unit_square", 0)


def test_bisect_both_marked():
    m = bisect(build_mesh(SQUARE_V, SQUARE_T), [0, 1])
    assert (m.n_triangles, m.n_vertices) == (4, 5)
    check_mesh(m, 1.0)


def test_bisect_closure_refines_neighbour():
    m = bisect(build_mesh(SQUARE_V, SQUARE_T), [0])
    assert m.n_triangles == 4
    check_mesh(m, 1.0)


def test_bisect_empty_marking_is_identity():
    m = domain_mesh("l_shape", 2)
    out = bisect(m, [])
    np.testing.assert_array_equal(out.vertices, m.vertices)
    np.testing.assert_array_equal(out.triangles, m.triangles)
    np.testing.assert_array_equal(out.refinement_edge, m.refinement_edge)


def test_bisect_rejects_bad_ids():
    with pytest.raises((MeshError, IndexError, ValueError)):
        bisect(domain_mesh("unit_square", 1), [5])


def test_children_take_newest_vertex_first():
    coarse = build_mesh(SQUARE_V, SQUARE_T)
    fine, ref = bisect(coarse, [0, 1], return_refinement=True)
    new = np.arange(coarse.n_vertices, fine.n_vertices)
    assert np.all(np.isin(fine.triangles[:, 0], new))
    assert np.all(fine.refinement_edge == 0)
    assert np.all(fine.generation == 1)
    np.testing.assert_allclose(fine.vertices[4], [0.5, 0.5])
    np.testing.assert_array_equal(np.sort(ref.vertex_parents[0]), [0, 2])


def test_prolongation_is_midpoint_average():
    coarse = domain_mesh("l_shape", 1)
    fine, ref = bisect(coarse, [0, 3], return_refinement=True)
    vals = np.arange(coarse.n_vertices, dtype=float) ** 2
    fv = ref.prolong(vals)
    np.testing.assert_array_equal(fv[:coarse.n_vertices], vals)
    for i, (a, b) in enumerate(ref.vertex_parents):
        assert fv[coarse.n_vertices + i] == 0.5 * (vals[a] + vals[b])
        np.testing.assert_allclose(fine.vertices[coarse.n_vertices + i],
                                   0.5 * (coarse.vertices[a] + coarse.vertices[b]))


def test_refinement_parent_map_covers_area():
    coarse = domain_mesh("unit_square", 2)
    fine, ref = bisect(coarse, [1, 4, 6], return_refinement=True)
    sums = np.bincount(ref.parent, weights=fine.areas, minlength=coarse.n_triangles)
    np.testing.assert_allclose(sums, coarse.areas, rtol=1e-13)


def test_bisect_is_deterministic():
    m = domain_mesh("l_shape", 2)
    a = bisect(bisect(m, [0, 5, 11]), [2, 7, 20])
    b = bisect(bisect(m, [11, 5, 0]), [20, 2, 7])
    np.testing.assert_array_equal(a.vertices, b.vertices)
    np.testing.assert_array_equal(a.triangles, b.triangles)


def test_element_geometry_invariants():
    m = bisect(domain_mesh("l_shape", 2), [0, 3, 9])
    for t in range(m.n_triangles):
        g = m.element_geometry(t)
        assert g.diameter == pytest.approx(g.edge_lengths.max())
        assert g.area <= g.diameter ** 2 / 2 + 1e-15
        np.testing.assert_allclose(np.linalg.norm(g.unit_normals, axis=1), 1.0, atol=1e-12)


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.data())
def test_random_bisection_keeps_invariants(data):
    kind = data.draw(st.sampled_from(["unit_square", "l_shape"]))
    area = 1.0 if kind == "unit_square" else 3.0
    m = domain_mesh(kind, data.draw(st.integers(1, 2)))
    for _ in range(data.draw(st.integers(1, 4))):
        marked = data.draw(st.sets(st.integers(0, m.n_triangles - 1), max_size=6))
        m = bisect(m, sorted(marked))
        check_mesh(m, area)


def test_hundred_random_bisection_rounds():
    rng = np.random.default_rng(7)
    m = domain_mesh("l_shape", 1)
    for _ in range(100):
        k = rng.integers(1, 4)
        m = bisect(m, rng.choice(m.n_triangles, size=min(k, m.n_triangles), replace=False))
    check_mesh(m, 3.0)


def test_min_angle_after_uniform_passes():
    m = domain_mesh("unit_square", 1)
    initial = m.min_angles().min()
    fine = uniform_refine(m, 12)
    assert fine.n_triangles == 2 * 2 ** 12
    assert fine.min_angles().min() >= 0.5 * initial
    check_mesh(fine, 1.0)


def test_mesh_file_round_trip(tmp_path):
    m = bisect(domain_mesh("l_shape", 2), [1, 2, 3])
    write_mesh(m, tmp_path / "m.txt")
    back = read_mesh(tmp_path / "m.txt")
    np.testing.assert_array_equal(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.refinement_edge, m.refinement_edge)
    np.testing.assert_array_equal(back.boundary_flags, m.boundary_flags)


def test_mesh_arrays_are_read_only():
    m = domain_mesh("unit_square", 1)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 3.0
