"""Manufactured and benchmark problems.

Sources come from closed-form values, gradients and Laplacians of the exact
fields through the strong form::

    f1 = -lap p - grad p . grad psi - p lap psi
    f2 = -lap n + grad n . grad psi + n lap psi
    f3 = -eps lap psi - p + n
"""
from __future__ import annotations

import numpy as np

from .fem import Field
from .pnp import ProblemSpec

PI = np.pi


def sine_product(k: float) -> Field:
    """``sin(k pi x) sin(k pi y)``."""
    w = k * PI

    def value(x, y):
        return np.sin(w * x) * np.sin(w * y)

    def grad(x, y):
        return w * np.cos(w * x) * np.sin(w * y), w * np.sin(w * x) * np.cos(w * y)

    def laplacian(x, y):
        return -2.0 * w * w * value(x, y)

    return Field(value, grad, laplacian)


def exponential_layer(rate: float, width: float) -> Field:
    """``exp(-rate x / width) + exp(-rate y / width)``."""
    c = rate / width

    def value(x, y):
        return np.exp(-c * x) + np.exp(-c * y)

    def grad(x, y):
        return -c * np.exp(-c * x), -c * np.exp(-c * y)

    def laplacian(x, y):
        return c * c * value(x, y)

    return Field(value, grad, laplacian)


def manufactured(p: Field, n: Field, psi: Field, epsilon: float, domain: str, name: str,
                 dirichlet=None) -> ProblemSpec:
    def f1(x, y):
        gpx, gpy = p.grad(x, y)
        gsx, gsy = psi.grad(x, y)
        return -p.laplacian(x, y) - (gpx * gsx + gpy * gsy) - p.value(x, y) * psi.laplacian(x, y)

    def f2(x, y):
        gnx, gny = n.grad(x, y)
        gsx, gsy = psi.grad(x, y)
        return -n.laplacian(x, y) + (gnx * gsx + gny * gsy) + n.value(x, y) * psi.laplacian(x, y)

    def f3(x, y):
        return -epsilon * psi.laplacian(x, y) - p.value(x, y) + n.value(x, y)

    if dirichlet is None:
        dirichlet = (p.value, n.value, psi.value)
    return ProblemSpec(epsilon, f1, f2, f3, dirichlet=dirichlet, exact=(p, n, psi),
                       domain=domain, name=name)


def _one(x, y):
    return np.ones(np.broadcast(x, y).shape)


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def example1() -> ProblemSpec:
    """Smooth trigonometric solution on the L-shape, eps = 1, zero boundary data."""
    return manufactured(sine_product(2), sine_product(3), sine_product(1), 1.0, "l_shape",
                        "example1", dirichlet=(_zero, _zero, _zero))


def example2() -> ProblemSpec:
    """Unit sources on the L-shape with homogeneous Dirichlet data; no exact solution."""
    return ProblemSpec(1.0, _one, _one, _one, dirichlet=(_zero, _zero, _zero),
                       domain="l_shape", name="example2")


def example3(epsilon: float) -> ProblemSpec:
    """Exponential boundary layers of width ``sqrt(eps)`` at x = 0 and y = 0."""
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    s = np.sqrt(epsilon)
    return manufactured(exponential_layer(1, s), exponential_layer(2, s), exponential_layer(3, s),
                        epsilon, "unit_square", "example3")


EXAMPLES = {1: example1, 2: example2, 3: example3}


def get_example(example_id: int, epsilon: float | None = None) -> ProblemSpec:
    if example_id not in EXAMPLES:
        raise ValueError(f"unknown example {example_id}; choose 1, 2 or 3")
    if example_id == 3:
        return example3(0.01 if epsilon is None else epsilon)
    if epsilon not in (None, 1.0):
        raise ValueError(f"example {example_id} is defined for epsilon = 1 only")
    return EXAMPLES[example_id]()
