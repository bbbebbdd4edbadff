"""P1 Lagrange machinery: quadrature, assembly, Dirichlet rows and norms."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .mesh import Mesh
from .sparse import SparseMatrix, from_triplets


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points with weights summing to one (scaled by |T| on use)."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


def _symmetric_rule():
    s10 = np.sqrt(10.0)
    r = np.sqrt(38.0 - 44.0 * np.sqrt(0.4))
    a1, a2 = (8.0 - s10 + r) / 18.0, (8.0 - s10 - r) / 18.0
    q = np.sqrt(213125.0 - 53320.0 * s10)
    w1, w2 = (620.0 + q) / 3720.0, (620.0 - q) / 3720.0
    pts = []
    for a in (a1, a2):
        b = 1.0 - 2.0 * a
        pts += [(b, a, a), (a, b, a), (a, a, b)]
    return np.array(pts), np.array([w1] * 3 + [w2] * 3)


_P4, _W4 = _symmetric_rule()

RULES = {
    1: QuadratureRule(np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0]), 1),
    2: QuadratureRule(
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3),
        2,
    ),
    4: QuadratureRule(_P4, _W4, 4),
}


def quadrature_rule(degree: int) -> QuadratureRule:
    try:
        return RULES[degree]
    except KeyError:
        raise ValueError(f"no quadrature rule of degree {degree}; choose from {sorted(RULES)}") from None


# Gauss-Legendre on [0, 1], exact to degree 3
GAUSS2_T = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS2_W = np.array([0.5, 0.5])


@dataclass(frozen=True, eq=False)
class FEFunction:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} dof values, got shape {vals.shape}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def dof_values(self) -> np.ndarray:
        return self.values

    def element_gradients(self) -> np.ndarray:
        """(nt, 2) constant gradient on every triangle."""
        return np.einsum("tk,tkd->td", self.values[self.mesh.triangles], self.mesh.gradients)

    def at_barycentric(self, bary: np.ndarray) -> np.ndarray:
        """(nt, nq) values at barycentric points ``bary`` (nq, 3)."""
        return self.values[self.mesh.triangles] @ np.asarray(bary).T

    def __call__(self, points) -> np.ndarray:
        return evaluate(self, points)


Pointwise = Callable[[np.ndarray, np.ndarray], np.ndarray]


def quadrature_points(mesh: Mesh, rule: QuadratureRule):
    """Physical coordinates (nt, nq) x and y of the rule's points."""
    v = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    xy = np.einsum("qk,tkd->tqd", rule.points, v)
    return xy[..., 0], xy[..., 1]


def evaluate_source(mesh: Mesh, f: Pointwise, rule: QuadratureRule) -> np.ndarray:
    """Values (nt, nq) of ``f`` at quadrature points; non-finite values raise."""
    x, y = quadrature_points(mesh, rule)
    vals = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        t = int(np.flatnonzero(bad.any(axis=1))[0])
        raise AssemblyError(f"non-finite source value on element {t}")
    return vals


def _scatter(mesh: Mesh, local: np.ndarray) -> SparseMatrix:
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1)
    cols = np.tile(tri, (1, 3))
    n = mesh.n_vertices
    return from_triplets(n, n, rows=rows, cols=cols, values=local.reshape(len(tri), 9))


def local_diffusion(mesh: Mesh, coefficient=1.0) -> np.ndarray:
    G = mesh.gradients
    c = np.broadcast_to(np.asarray(coefficient, dtype=float), (mesh.n_triangles,))
    return (c * mesh.areas)[:, None, None] * np.einsum("tid,tjd->tij", G, G)


def assemble_diffusion(mesh: Mesh, coefficient: float = 1.0) -> SparseMatrix:
    """``coefficient * int grad(phi_j) . grad(phi_i)``."""
    if not coefficient > 0:
        raise ValueError("diffusion coefficient must be positive")
    return _scatter(mesh, local_diffusion(mesh, coefficient))


def assemble_weighted_diffusion(mesh: Mesh, weight: FEFunction) -> SparseMatrix:
    """``int w grad(phi_j) . grad(phi_i)`` for a P1 weight ``w`` (exact)."""
    wbar = weight.values[mesh.triangles].mean(axis=1)
    return _scatter(mesh, local_diffusion(mesh, wbar))


def local_drift(mesh: Mesh, psi: FEFunction, sign: int = 1) -> np.ndarray:
    gpsi = psi.element_gradients()
    row = np.einsum("td,tid->ti", gpsi, mesh.gradients) * (mesh.areas / 3.0)[:, None]
    return sign * np.repeat(row[:, :, None], 3, axis=2)


def assemble_drift(mesh: Mesh, psi: FEFunction, sign: int = 1) -> SparseMatrix:
    """``sign * int phi_j grad(psi) . grad(phi_i)``; row i, column j."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return _scatter(mesh, local_drift(mesh, psi, sign))


MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_mass(mesh: Mesh) -> SparseMatrix:
    return _scatter(mesh, mesh.areas[:, None, None] * MASS_REF[None])


def assemble_load(mesh: Mesh, f: Pointwise, quad_degree: int = 2) -> np.ndarray:
    """``int f phi_i`` by the chosen quadrature rule on every element."""
    if quad_degree not in (2, 4):
        raise ValueError("quad_degree must be 2 or 4")
    rule = quadrature_rule(quad_degree)
    vals = evaluate_source(mesh, f, rule)
    local = np.einsum("tq,q,qk->tk", vals, rule.weights, rule.points) * mesh.areas[:, None]
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def apply_dirichlet(A, b, dofs, values):
    """Symmetric row/column elimination of prescribed values.

    Constrained rows and columns become identity rows, known columns move to
    the right-hand side, and ``b[dofs] = values``. Idempotent.
    """
    A = sp.csr_array(A)
    b = np.array(b, dtype=float)
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    if not np.all(np.isfinite(values)):
        missing = dofs[~np.isfinite(values)]
        raise ValueError(f"missing boundary value for Dirichlet vertex {int(missing[0])}")
    n = A.shape[0]
    if dofs.size == 0:
        return A, b
    lifted = np.zeros(n)
    lifted[dofs] = values
    b = b - A @ lifted
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags_array(keep)
    fixed = sp.diags_array(1.0 - keep)
    A = (D @ A @ D + fixed).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    b[dofs] = values
    return A, b


def interpolate(mesh: Mesh, f: Pointwise) -> FEFunction:
    x, y = mesh.vertices.T
    return FEFunction(mesh, np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape))


def _as_components(u) -> list:
    if isinstance(u, FEFunction):
        return [u]
    return list(u)


def eps_norm(u: Union[FEFunction, Sequence[FEFunction]], epsilon: float) -> float:
    """``(||u||_L2^2 + epsilon |u|_H1^2)^(1/2)``, summed over components."""
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    total = 0.0
    for c in _as_components(u):
        mesh = c.mesh
        l2 = np.einsum("tk,kl,tl,t->", c.values[mesh.triangles], MASS_REF,
                       c.values[mesh.triangles], mesh.areas)
        g = c.element_gradients()
        h1 = np.sum(mesh.areas * np.einsum("td,td->t", g, g))
        total += l2 + epsilon * h1
    return float(np.sqrt(max(total, 0.0)))


@dataclass(frozen=True)
class Field:
    """Closed-form scalar field with gradient (and optionally Laplacian)."""

    value: Pointwise
    grad: Callable
    laplacian: Pointwise | None = None


def error_norms(u_h, exact, quad_degree: int = 4, epsilon: float = 1.0):
    """Quadrature errors ``(L2, H1 seminorm, eps-norm)`` of ``u_h - exact``.

    ``u_h`` is a FEFunction and ``exact`` a Field, or matching sequences of
    both (the errors are then combined in the l2 sense).
    """
    comps = _as_components(u_h)
    fields = [exact] if isinstance(exact, Field) else list(exact)
    if len(comps) != len(fields):
        raise ValueError("number of discrete and exact components differ")
    rule = quadrature_rule(quad_degree)
    l2 = h1 = 0.0
    for c, fld in zip(comps, fields):
        mesh = c.mesh
        x, y = quadrature_points(mesh, rule)
        wa = rule.weights[None, :] * mesh.areas[:, None]
        diff = c.at_barycentric(rule.points) - fld.value(x, y)
        l2 += np.sum(wa * diff ** 2)
        gx, gy = fld.grad(x, y)
        g = c.element_gradients()
        h1 += np.sum(wa * ((g[:, 0:1] - gx) ** 2 + (g[:, 1:2] - gy) ** 2))
    return float(np.sqrt(l2)), float(np.sqrt(h1)), float(np.sqrt(l2 + epsilon * h1))


def locate(mesh: Mesh, points, candidates: int = 12):
    """Containing triangle and barycentric coordinates for each point.

    Points outside the mesh get triangle -1.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tree = cKDTree(mesh.centroids())
    k = min(candidates, mesh.n_triangles)
    _, cand = tree.query(pts, k=k)
    cand = np.asarray(cand).reshape(len(pts), k)
    owner = np.full(len(pts), -1, dtype=np.int64)
    bary = np.zeros((len(pts), 3))

    def _bary(tri_ids, p):
        v = mesh.vertices[mesh.triangles[tri_ids]]
        d1 = v[..., 1, :] - v[..., 0, :]
        d2 = v[..., 2, :] - v[..., 0, :]
        r = p - v[..., 0, :]
        det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        l1 = (r[..., 0] * d2[..., 1] - r[..., 1] * d2[..., 0]) / det
        l2 = (d1[..., 0] * r[..., 1] - d1[..., 1] * r[..., 0]) / det
        return np.stack([1 - l1 - l2, l1, l2], axis=-1)

    lam = _bary(cand, pts[:, None, :])
    inside = (lam >= -1e-12).all(axis=-1)
    hit = inside.any(axis=1)
    first = np.argmax(inside, axis=1)
    owner[hit] = cand[hit, first[hit]]
    bary[hit] = lam[hit, first[hit]]
    for i in np.flatnonzero(~hit):
        lam_all = _bary(np.arange(mesh.n_triangles), pts[i][None, :])
        ok = np.flatnonzero((lam_all >= -1e-12).all(axis=1))
        if ok.size:
            owner[i] = ok[0]
            bary[i] = lam_all[ok[0]]
    return owner, bary


def evaluate(u: FEFunction, points) -> np.ndarray:
    """Values of ``u`` at arbitrary points; NaN outside the mesh."""
    owner, bary = locate(u.mesh, points)
    out = np.full(len(owner), np.nan)
    ok = owner >= 0
    out[ok] = np.einsum("pk,pk->p", u.values[u.mesh.triangles[owner[ok]]], bary[ok])
    return out
