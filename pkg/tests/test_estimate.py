import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnp_afem.adapt import adaptive_loop, fit_slope
from pnp_afem.estimate import EstimatorBreakdown, estimate, mark_dorfler, mark_maximum
from pnp_afem.mesh import bisect, build_mesh, domain_mesh
from pnp_afem.pnp import PNPState, ProblemSpec, gummel_solve
from pnp_afem.problems import example1, example2, example3

REF = build_mesh([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])


def const(c):
    return lambda x, y: np.full_like(x, c)


def breakdown(values):
    values = np.asarray(values, dtype=float)
    z = np.zeros(0)
    return EstimatorBreakdown(values, z, z.astype(int), np.zeros_like(values), values)


def test_constant_data_single_triangle():
    for verts in ([(0, 0), (1, 0), (0, 1)], [(0, 0), (2, 0.5), (0.3, 1.7)]):
        m = build_mesh(verts, [(0, 1, 2)])
        spec = ProblemSpec(1.0, const(1.0), const(1.0), const(1.0))
        b = estimate(PNPState.zeros(m), spec)
        h, area = m.diameters[0], m.areas[0]
        assert b.eta_T[0] ** 2 == pytest.approx(3 * h ** 2 * area, rel=1e-12)
        assert b.eta_E.size == 0
        assert b.osc_T[0] == 0.0


def test_oscillation_of_linear_source():
    spec = ProblemSpec(1.0, const(0.0), const(0.0), lambda x, y: x)
    b = estimate(PNPState.zeros(REF), spec)
    h = np.sqrt(2)
    assert b.osc_T[0] == pytest.approx(h / 6, rel=1e-12)
    assert b.eta_T[0] ** 2 == pytest.approx(h ** 2 / 9 * 0.5, rel=1e-12)


def test_zero_problem_has_zero_estimate():
    m = domain_mesh("l_shape", 2)
    b = estimate(PNPState.zeros(m), ProblemSpec(1.0, const(0.0), const(0.0), const(0.0)))
    assert b.eta_global == 0.0 and b.osc_global == 0.0


def test_vanishing_iff_residuals_vanish():
    # psi linear, p = n = 0 and f3 = 0: every element and jump residual is zero
    m = domain_mesh("unit_square", 3)
    state = PNPState.from_arrays(m, np.zeros(m.n_vertices), np.zeros(m.n_vertices), m.vertices @ [0.3, -1.2])
    spec = ProblemSpec(0.5, const(0.0), const(0.0), const(0.0))
    # gradients of a linear field agree across edges up to roundoff
    assert estimate(state, spec).eta_global < 1e-14
    kinked = state.psi.values.copy()
    kinked[m.interior_vertices[0]] += 1e-3
    b = estimate(PNPState.from_arrays(m, state.p.values, state.n.values, kinked), spec)
    assert b.eta_global > 1e-4 and np.all(b.eta_T == 0.0)


def some_state(mesh, seed=0):
    rng = np.random.default_rng(seed)
    return PNPState.from_arrays(mesh, *rng.normal(size=(3, mesh.n_vertices)))


@pytest.mark.parametrize("variant", ["verbatim", "scaled"])
def test_split_consistency(variant):
    m = bisect(domain_mesh("l_shape", 2), [0, 5, 9])
    b = estimate(some_state(m), example1(), variant)
    direct = np.sqrt(np.sum(b.eta_T ** 2) + np.sum(b.eta_E ** 2))
    assert b.eta_global == pytest.approx(direct, rel=1e-12)
    assert np.sum(b.element_indicator ** 2) == pytest.approx(b.eta_global ** 2, rel=1e-12)
    np.testing.assert_array_equal(b.edge_ids, m.interior_edges)


def test_epsilon_scaling():
    m = bisect(domain_mesh("unit_square", 2), [1, 2])
    state = some_state(m, 3)
    a = estimate(state, example3(0.4))
    spec_b = example3(0.4)
    spec_b = ProblemSpec(0.1, spec_b.f1, spec_b.f2, spec_b.f3, domain=spec_b.domain)
    b = estimate(state, spec_b)
    for x, y in ((a.eta_T, b.eta_T), (a.eta_E, b.eta_E), (a.osc_T, b.osc_T)):
        np.testing.assert_allclose(y, 2.0 * x, rtol=1e-12)


def test_scaled_variant_only_changes_potential_jump():
    m = domain_mesh("unit_square", 2)
    state = PNPState.from_arrays(m, np.zeros(m.n_vertices), np.zeros(m.n_vertices), some_state(m).psi.values)
    spec = example3(0.25)
    v = estimate(state, spec, "verbatim")
    s = estimate(state, spec, "scaled")
    np.testing.assert_array_equal(v.eta_T, s.eta_T)
    np.testing.assert_allclose(s.eta_E, 0.25 * v.eta_E, rtol=1e-12)
    with pytest.raises(ValueError):
        estimate(state, spec, "other")


def test_mark_maximum_examples():
    np.testing.assert_array_equal(mark_maximum(breakdown([4, 3, 1]), 0.5), [0, 1])
    np.testing.assert_array_equal(mark_maximum(breakdown([4, 1, 4, 2]), 1.0), [0, 2])
    assert mark_maximum(breakdown([0, 0, 0])).size == 0
    with pytest.raises(ValueError):
        mark_maximum(breakdown([1.0]), 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=30), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_mark_maximum_monotone(values, t1, t2):
    lo, hi = sorted((t1, t2))
    assert set(mark_maximum(breakdown(values), hi)) <= set(mark_maximum(breakdown(values), lo))


def test_mark_dorfler_examples():
    # 4^2 = 16 of 26 covers theta^2 = 0.49
    np.testing.assert_array_equal(mark_dorfler(breakdown([4, 3, 1]), 0.7), [0])
    np.testing.assert_array_equal(mark_dorfler(breakdown([4, 3, 0, 1]), 0.999999), [0, 1, 3])
    np.testing.assert_array_equal(mark_dorfler(breakdown([2, 2, 2, 1]), 0.3), [0, 1, 2])
    assert mark_dorfler(breakdown([0, 0])).size == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=30), st.floats(0.05, 0.95))
def test_mark_dorfler_bulk(values, theta):
    vals = np.asarray(values)
    marked = mark_dorfler(breakdown(vals), theta)
    total = np.sum(vals ** 2)
    if total == 0:
        assert marked.size == 0
        return
    assert np.sum(vals[marked] ** 2) >= theta ** 2 * total * (1 - 1e-12)
    if marked.size:
        assert vals[marked].min() >= vals[np.setdiff1d(np.arange(len(vals)), marked)].max(initial=0.0)


def test_adaptive_loop_example2_small():
    hist = adaptive_loop(example2(), max_dofs=2000)
    N = hist.column("N")
    eta = hist.column("eta")
    assert np.all(np.diff(N) > 0)
    assert N[-1] >= 2000
    assert np.all(np.diff(eta[3:]) < 0)
    assert np.all(np.isnan(hist.column("err_eps")))
    assert np.all(hist.column("gummel_iters") >= 1)


def test_adaptive_loop_single_level():
    hist = adaptive_loop(example2(), max_dofs=50)
    assert len(hist) == 1 and hist.rows[0].N == 63


def test_adaptive_loop_zero_problem_stops():
    spec = ProblemSpec(1.0, const(0.0), const(0.0), const(0.0), domain="l_shape")
    hist = adaptive_loop(spec, max_dofs=10_000)
    assert len(hist) == 1 and hist.rows[0].eta == 0.0


def test_adaptive_loop_full_gummel_and_dorfler():
    hist = adaptive_loop(example1(), max_dofs=1500, marking="dorfler", solver="full-gummel")
    err = hist.column("err_eps")
    assert err[-1] < err[0]
    assert hist.metadata["theta"] == 0.3


def test_adaptive_loop_rejects_options():
    with pytest.raises(ValueError):
        adaptive_loop(example2(), marking="random")
    with pytest.raises(ValueError):
        adaptive_loop(example2(), solver="newton")


def test_example2_indicator_peaks_at_corner():
    hist = adaptive_loop(example2(), max_dofs=1200)
    # the marking indicator; the element residual alone is largest on coarse elements
    t = int(np.argmax(hist.breakdown.element_indicator))
    assert np.linalg.norm(hist.mesh.centroids()[t]) < 0.1


def test_fit_slope():
    N = np.array([10, 20, 40, 80, 160, 320.0])
    assert fit_slope(N, 3 * N ** -0.5) == pytest.approx(-0.5, abs=1e-12)
    assert fit_slope(N[:4], N[:4]) is None
    assert fit_slope(N, np.full(6, np.nan)) is None


def test_gummel_converged_estimate_decreases_with_refinement():
    spec = example1()
    m = domain_mesh("l_shape", 2)
    s0, _ = gummel_solve(m, spec)
    m1 = bisect(bisect(m, np.arange(m.n_triangles)), np.arange(2 * m.n_triangles))
    s1, _ = gummel_solve(m1, spec)
    assert estimate(s1, spec).eta_global < estimate(s0, spec).eta_global
