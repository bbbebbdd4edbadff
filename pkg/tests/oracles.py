"""Independent reference computations used by the test-suite.

Local matrices come from exact symbolic integrals on the reference triangle
pushed forward through the affine map, assembled densely element by element.
"""
from functools import lru_cache

import numpy as np
import sympy as s


@lru_cache(maxsize=None)
def reference_integrals():
    """Exact ``int phi_i phi_j``, ``int phi_i`` and ``int 1`` on the reference triangle."""
    x, y = s.symbols("x y")
    phi = [1 - x - y, x, y]

    def integrate(expr):
        return s.integrate(s.integrate(expr, (y, 0, 1 - x)), (x, 0, 1))

    mass = np.array([[float(integrate(a * b)) for b in phi] for a in phi])
    first = np.array([float(integrate(a)) for a in phi])
    return mass, first, float(integrate(s.Integer(1)))


REF_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def affine(mesh, t):
    v = mesh.vertices[mesh.triangles[t]]
    J = np.column_stack([v[1] - v[0], v[2] - v[0]])
    det = abs(np.linalg.det(J))
    grads = REF_GRAD @ np.linalg.inv(J)
    return det, grads


def dense_matrices(mesh, psi_values, weight_values):
    """Dense diffusion, mass, drift (sign +1) and weighted diffusion."""
    mass_ref, first_ref, area_ref = reference_integrals()
    nv = mesh.n_vertices
    K, M, D, W = (np.zeros((nv, nv)) for _ in range(4))
    for t in range(mesh.n_triangles):
        tri = mesh.triangles[t]
        det, G = affine(mesh, t)
        gpsi = psi_values[tri] @ G
        wint = det * (weight_values[tri] @ first_ref)
        for a in range(3):
            for b in range(3):
                i, j = tri[a], tri[b]
                K[i, j] += det * area_ref * (G[a] @ G[b])
                M[i, j] += det * mass_ref[a, b]
                D[i, j] += (gpsi @ G[a]) * det * first_ref[b]
                W[i, j] += wint * (G[a] @ G[b])
    return K, M, D, W


def dense_linear_load(mesh, coeffs):
    """Load vector of ``f = c0 + c1 x + c2 y`` (exact, since f is its own interpolant)."""
    mass_ref, _, _ = reference_integrals()
    c0, c1, c2 = coeffs
    b = np.zeros(mesh.n_vertices)
    for t in range(mesh.n_triangles):
        tri = mesh.triangles[t]
        det, _ = affine(mesh, t)
        fv = c0 + c1 * mesh.vertices[tri, 0] + c2 * mesh.vertices[tri, 1]
        b[tri] += det * mass_ref @ fv
    return b


def laplacian_fd(u, x, y, h=1e-5):
    return (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4 * u(x, y)) / h ** 2


def flux_divergence_fd(c, psi, x, y, h=1e-5):
    """``div(c grad psi)`` from point values only, by staggered differences."""
    def half(dx, dy):
        cm = c(x + 0.5 * dx, y + 0.5 * dy)
        return cm * (psi(x + dx, y + dy) - psi(x, y))

    return (half(h, 0) + half(-h, 0) + half(0, h) + half(0, -h)) / h ** 2
