"""Residual error indicators and marking strategies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import GAUSS2_T, GAUSS2_W, evaluate_source, quadrature_rule
from .pnp import PNPState, ProblemSpec

EDGE_VARIANTS = ("verbatim", "scaled")


@dataclass(frozen=True, eq=False)
class EstimatorBreakdown:
    eta_T: np.ndarray
    eta_E: np.ndarray
    edge_ids: np.ndarray
    osc_T: np.ndarray
    element_indicator: np.ndarray

    @property
    def eta_global(self) -> float:
        return float(np.sqrt(np.sum(self.eta_T ** 2) + np.sum(self.eta_E ** 2)))

    @property
    def osc_global(self) -> float:
        return float(np.sqrt(np.sum(self.osc_T ** 2)))


def estimate(state: PNPState, spec: ProblemSpec, edge_variant: str = "verbatim") -> EstimatorBreakdown:
    """Element, interior-edge and oscillation indicators of a discrete state.

    For P1 fields ``div(p grad psi) = grad p . grad psi`` on each element, so
    the element residuals of the two transport equations are constant while
    the Poisson residual ``n - p - mean(f3)`` is linear. Source means use the
    degree-2 rule of the load vector; the oscillation uses the degree-4 rule.

    ``edge_variant="scaled"`` puts ``eps`` inside the potential's flux jump.
    """
    if edge_variant not in EDGE_VARIANTS:
        raise ValueError(f"edge_variant must be one of {EDGE_VARIANTS}")
    mesh = state.mesh
    eps = spec.epsilon
    area = mesh.areas
    hT = mesh.diameters

    rule2 = quadrature_rule(2)
    means = [evaluate_source(mesh, f, rule2) @ rule2.weights for f in spec.sources]

    gp = state.p.element_gradients()
    gn = state.n.element_gradients()
    gpsi = state.psi.element_gradients()
    r1 = np.einsum("td,td->t", gp, gpsi) + means[0]
    r2 = np.einsum("td,td->t", gn, gpsi) - means[1]
    r3 = (state.n.at_barycentric(rule2.points) - state.p.at_barycentric(rule2.points)
          - means[2][:, None])
    res_sq = (r1 ** 2 + r2 ** 2) * area + (r3 ** 2 @ rule2.weights) * area
    eta_T = np.sqrt(hT ** 2 / eps * res_sq)

    rule4 = quadrature_rule(4)
    osc_sq = np.zeros(mesh.n_triangles)
    for f, mean in zip(spec.sources, means):
        vals = evaluate_source(mesh, f, rule4)
        osc_sq += ((vals - mean[:, None]) ** 2 @ rule4.weights) * area
    osc_T = np.sqrt(hT ** 2 / eps * osc_sq)

    edges = mesh.interior_edges
    t0, t1 = mesh.edge_triangles[edges, 0], mesh.edge_triangles[edges, 1]
    a, b = mesh.edges[edges, 0], mesh.edges[edges, 1]
    d = mesh.vertices[b] - mesh.vertices[a]
    hE = np.hypot(d[:, 0], d[:, 1])
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / hE[:, None]

    def jump(g):
        return np.einsum("ed,ed->e", g[t0] - g[t1], normal)

    jp, jn, jpsi = jump(gp), jump(gn), jump(gpsi)
    s = GAUSS2_T[None, :]
    p_e = (1 - s) * state.p.values[a][:, None] + s * state.p.values[b][:, None]
    n_e = (1 - s) * state.n.values[a][:, None] + s * state.n.values[b][:, None]
    j1 = jp[:, None] + p_e * jpsi[:, None]
    j2 = jn[:, None] - n_e * jpsi[:, None]
    j3 = jpsi * (eps if edge_variant == "scaled" else 1.0)
    edge_sq = hE * ((j1 ** 2 + j2 ** 2) @ GAUSS2_W + j3 ** 2)
    eta_E = np.sqrt(hE / eps * edge_sq)

    indicator_sq = eta_T ** 2
    half = 0.5 * eta_E ** 2
    indicator_sq = indicator_sq + np.bincount(t0, weights=half, minlength=mesh.n_triangles)
    indicator_sq = indicator_sq + np.bincount(t1, weights=half, minlength=mesh.n_triangles)
    return EstimatorBreakdown(eta_T, eta_E, edges, osc_T, np.sqrt(indicator_sq))


def mark_maximum(breakdown: EstimatorBreakdown, theta: float = 0.5) -> np.ndarray:
    """Elements whose indicator is at least ``theta`` times the largest one."""
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    ind = breakdown.element_indicator
    top = ind.max(initial=0.0)
    if top <= 0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(ind >= theta * top)


def mark_dorfler(breakdown: EstimatorBreakdown, theta: float = 0.3) -> np.ndarray:
    """Smallest greedy set whose squared indicators reach ``theta^2 eta^2``.

    Elements tied with the last one taken are included as well.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    ind = breakdown.element_indicator
    sq = ind ** 2
    total = sq.sum()
    if total <= 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(-ind, kind="stable")
    cum = np.cumsum(sq[order])
    k = int(np.searchsorted(cum, theta ** 2 * total * (1 - 1e-14))) + 1
    k = min(k, len(order))
    cut = ind[order[k - 1]]
    chosen = np.flatnonzero(ind >= cut)
    return np.sort(chosen[ind[chosen] > 0])
