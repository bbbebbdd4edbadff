"""Nonlinear steady PNP solves on a fixed mesh.

The weak system for ``u = (p, n, psi)`` with test functions ``(v1, v2, v3)`` is::

    int grad p . grad v1 + p grad psi . grad v1 - f1 v1 = 0
    int grad n . grad v2 - n grad psi . grad v2 - f2 v2 = 0
    int eps grad psi . grad v3 - p v3 + n v3 - f3 v3  = 0
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from . import fem
from .fem import FEFunction, Field
from .mesh import Mesh, Refinement
from .sparse import SolverError, solve

logger = logging.getLogger(__name__)

Pointwise = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


@dataclass(frozen=True)
class ProblemSpec:
    """Sources, Dirichlet data and (optionally) the exact solution.

    ``dirichlet`` and ``exact`` are ordered ``(p, n, psi)``.
    """

    epsilon: float
    f1: Pointwise
    f2: Pointwise
    f3: Pointwise
    dirichlet: tuple = (_zero, _zero, _zero)
    exact: Optional[tuple] = None
    domain: str = "unit_square"
    name: str = "custom"

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if len(self.dirichlet) != 3:
            raise ValueError("dirichlet needs one function per unknown (p, n, psi)")
        if self.exact is not None and len(self.exact) != 3:
            raise ValueError("exact needs one Field per unknown (p, n, psi)")

    @property
    def sources(self):
        return (self.f1, self.f2, self.f3)


@dataclass(frozen=True, eq=False)
class PNPState:
    p: FEFunction
    n: FEFunction
    psi: FEFunction

    def __post_init__(self):
        if not (self.p.mesh is self.n.mesh is self.psi.mesh):
            raise ValueError("p, n and psi must live on the same mesh")
        for name in ("p", "n", "psi"):
            if not np.all(np.isfinite(getattr(self, name).values)):
                raise ValueError(f"non-finite dof values in {name}")

    @property
    def mesh(self) -> Mesh:
        return self.p.mesh

    @property
    def components(self):
        return (self.p, self.n, self.psi)

    @classmethod
    def from_arrays(cls, mesh: Mesh, p, n, psi) -> "PNPState":
        return cls(FEFunction(mesh, p), FEFunction(mesh, n), FEFunction(mesh, psi))

    @classmethod
    def zeros(cls, mesh: Mesh) -> "PNPState":
        z = np.zeros(mesh.n_vertices)
        return cls.from_arrays(mesh, z, z, z)

    def stacked(self) -> np.ndarray:
        return np.concatenate([c.values for c in self.components])


@dataclass(frozen=True)
class ConditionReport:
    grad_psi_inf: float
    max_conc_inf: float
    c_p: float
    lhs: float
    rhs: float
    satisfied: bool
    heuristic_c_p: bool = False


class GummelError(RuntimeError):
    def __init__(self, message, increment=np.nan, increments=()):
        super().__init__(message)
        self.increment = increment
        self.increments = list(increments)


class UniquenessWarning(UserWarning):
    pass


class _Operators:
    """Per-mesh matrices and load vectors reused across iterations."""

    def __init__(self, mesh: Mesh, spec: ProblemSpec):
        self.mesh = mesh
        self.spec = spec
        self.K = fem.assemble_diffusion(mesh, 1.0)
        self.M = fem.assemble_mass(mesh)
        self.loads = [fem.assemble_load(mesh, f, 2) for f in spec.sources]
        self.bdofs = mesh.boundary_vertices
        xb, yb = mesh.vertices[self.bdofs].T
        self.bvals = [np.broadcast_to(np.asarray(g(xb, yb), dtype=float), xb.shape)
                      for g in spec.dirichlet]

    def _solve(self, A, b, values, tag):
        A, b = fem.apply_dirichlet(A, b, self.bdofs, values)
        try:
            return solve(A, b)
        except SolverError as exc:
            raise SolverError(f"{tag}: {exc}", residual=exc.residual) from exc

    def poisson(self, p, n):
        rhs = self.M @ (p - n) + self.loads[2]
        return self._solve(self.spec.epsilon * self.K, rhs, self.bvals[2], "poisson")

    def nernst_planck(self, psi):
        psi_h = FEFunction(self.mesh, psi)
        D = fem.assemble_drift(self.mesh, psi_h, +1)
        p = self._solve(self.K + D, self.loads[0], self.bvals[0], "nernst-planck (p)")
        n = self._solve(self.K - D, self.loads[1], self.bvals[1], "nernst-planck (n)")
        return p, n

    def l2(self, v):
        return float(np.sqrt(max(v @ (self.M @ v), 0.0)))

    def with_boundary(self, values, k):
        out = np.array(values, dtype=float)
        out[self.bdofs] = self.bvals[k]
        return out


def initial_state(mesh: Mesh, spec: ProblemSpec) -> PNPState:
    """Dirichlet data at boundary vertices, zero inside."""
    ops = _Operators(mesh, spec)
    z = np.zeros(mesh.n_vertices)
    return PNPState.from_arrays(mesh, *(ops.with_boundary(z, k) for k in range(3)))


def gummel_solve(mesh: Mesh, spec: ProblemSpec, initial: Optional[PNPState] = None,
                 tol: float = 1e-5, max_iter: int = 100, relaxation: float = 1.0,
                 history: Optional[list] = None, _ops=None):
    """Decoupled fixed-point iteration.

    Each sweep solves Poisson for psi from the current (p, n), then the two
    Nernst-Planck equations for the next (p, n) with that psi. Stops once
    ``||psi_k+1 - psi_k||_L2 < tol``. The increments are appended to
    ``history`` when a list is given.

    Returns
    -------
    state : PNPState
    iterations : int
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0 < relaxation <= 1:
        raise ValueError("relaxation must lie in (0, 1]")
    ops = _ops or _Operators(mesh, spec)
    if initial is None:
        initial = initial_state(mesh, spec)
    if initial.mesh is not mesh:
        raise ValueError("initial state lives on a different mesh")
    p, n, psi = (c.values.copy() for c in initial.components)
    increments = [] if history is None else history
    for k in range(1, max_iter + 1):
        psi_new = ops.poisson(p, n)
        if relaxation != 1.0:
            psi_new = relaxation * psi_new + (1.0 - relaxation) * psi
        inc = ops.l2(psi_new - psi)
        increments.append(inc)
        psi = psi_new
        p, n = ops.nernst_planck(psi)
        logger.debug("gummel %d: |dpsi|_L2 = %.3e", k, inc)
        if not np.isfinite(inc):
            break
        if inc < tol:
            return PNPState.from_arrays(mesh, p, n, psi), k
    raise GummelError(f"Gummel iteration did not converge in {max_iter} sweeps "
                      f"(last increment {increments[-1]:.3e})",
                      increment=increments[-1], increments=increments)


def two_grid_step(coarse_state: PNPState, refinement: Refinement, spec: ProblemSpec,
                  reenter_gummel: bool = False, residual_tol: float = 1e-6,
                  gummel_tol: float = 1e-5, relaxation: float = 1.0):
    """One Poisson and one Nernst-Planck solve on the fine mesh.

    p and n are prolonged from the coarse state, psi is solved with them as
    data, and then p and n are solved with that psi. With ``reenter_gummel``
    Gummel iteration resumes on the fine mesh whenever the largest weak
    residual entry exceeds ``residual_tol``.

    Returns ``(state, sweeps)``.
    """
    if not isinstance(refinement, Refinement) or refinement.coarse is not coarse_state.mesh:
        raise ValueError("fine mesh is not a refinement of the coarse state's mesh")
    fine = refinement.fine
    ops = _Operators(fine, spec)
    p0 = ops.with_boundary(refinement.prolong(coarse_state.p.values), 0)
    n0 = ops.with_boundary(refinement.prolong(coarse_state.n.values), 1)
    psi = ops.poisson(p0, n0)
    p, n = ops.nernst_planck(psi)
    state = PNPState.from_arrays(fine, p, n, psi)
    sweeps = 1
    if reenter_gummel:
        worst = max(np.abs(r).max(initial=0.0) for r in weak_residual(state, spec))
        if worst > residual_tol:
            state, extra = gummel_solve(fine, spec, state, tol=gummel_tol,
                                        relaxation=relaxation, _ops=ops)
            sweeps += extra
    return state, sweeps


def prolong_state(state: PNPState, refinement: Refinement) -> PNPState:
    return PNPState.from_arrays(refinement.fine, *(refinement.prolong(c.values) for c in state.components))


def weak_residual(state: PNPState, spec: ProblemSpec):
    """``<F(u_h), phi_i>`` for each equation and every interior vertex."""
    mesh = state.mesh
    K = fem.assemble_diffusion(mesh, 1.0)
    M = fem.assemble_mass(mesh)
    D = fem.assemble_drift(mesh, state.psi, +1)
    F1, F2, F3 = (fem.assemble_load(mesh, f, 2) for f in spec.sources)
    p, n, psi = (c.values for c in state.components)
    r1 = K @ p + D @ p - F1
    r2 = K @ n - D @ n - F2
    r3 = spec.epsilon * (K @ psi) - M @ p + M @ n - F3
    inner = mesh.interior_vertices
    return r1[inner], r2[inner], r3[inner]


def linearized_operator(state: PNPState, spec: ProblemSpec):
    """Block matrix of ``DF(u)`` acting on ``(phi1, phi2, phi3)`` stacked.

    Rows are ordered like the test functions ``(v1, v2, v3)``; no boundary
    conditions are applied.
    """
    mesh = state.mesh
    K = fem.assemble_diffusion(mesh, 1.0)
    M = fem.assemble_mass(mesh)
    D = fem.assemble_drift(mesh, state.psi, +1)
    Wp = fem.assemble_weighted_diffusion(mesh, state.p)
    Wn = fem.assemble_weighted_diffusion(mesh, state.n)
    return sp.block_array([
        [K + D, None, Wp],
        [None, K - D, -Wn],
        [-M, M, spec.epsilon * K],
    ], format="csr")


def solve_linearized(state: PNPState, R: Sequence[Pointwise], spec: ProblemSpec,
                     c_p: Optional[float] = None, rel_tol: float = 1e-10) -> PNPState:
    """Solve ``<DF(u) phi, v> = <R, v>`` with homogeneous Dirichlet data.

    Warns with UniquenessWarning when the linearization point violates the
    uniqueness condition.
    """
    report = check_uniqueness_condition(state, spec.epsilon, c_p)
    if not report.satisfied:
        warnings.warn(
            f"uniqueness condition fails at the linearization point "
            f"(lhs {report.lhs:.3g} >= rhs {report.rhs:.3g})", UniquenessWarning, stacklevel=2)
    mesh = state.mesh
    nv = mesh.n_vertices
    A = linearized_operator(state, spec)
    b = np.concatenate([fem.assemble_load(mesh, r, 2) for r in R])
    bd = mesh.boundary_vertices
    dofs = np.concatenate([bd, bd + nv, bd + 2 * nv])
    A, b = fem.apply_dirichlet(A, b, dofs, 0.0)
    try:
        phi = solve(A, b, method="direct", rel_tol=rel_tol)
    except SolverError as exc:
        raise SolverError(f"linearized system: {exc}", residual=exc.residual) from exc
    return PNPState.from_arrays(mesh, phi[:nv], phi[nv:2 * nv], phi[2 * nv:])


def domain_diameter(mesh: Mesh) -> float:
    pts = mesh.vertices[mesh.boundary_vertices]
    if len(pts) > 3:
        pts = pts[ConvexHull(pts).vertices]
    return float(pdist(pts).max())


def check_uniqueness_condition(state: PNPState, epsilon: float, c_p: Optional[float] = None) -> ConditionReport:
    """Evaluate ``|grad psi|_inf + sqrt2 C_p/eps max(|p|_inf, |n|_inf) < sqrt2/(1 + C_p^2)``.

    Sup-norms are the exact discrete ones (vertex maxima, elementwise
    gradients). Without ``c_p`` the convex-domain Poincare bound
    ``diam / pi`` is used and the report is flagged heuristic.
    """
    heuristic = c_p is None
    if heuristic:
        c_p = domain_diameter(state.mesh) / np.pi
    if c_p <= 0:
        raise ValueError("c_p must be positive")
    g = state.psi.element_gradients()
    grad_inf = float(np.sqrt(np.einsum("td,td->t", g, g)).max())
    conc = float(max(np.abs(state.p.values).max(), np.abs(state.n.values).max()))
    lhs = grad_inf + np.sqrt(2.0) * c_p / epsilon * conc
    rhs = np.sqrt(2.0) / (1.0 + c_p ** 2)
    return ConditionReport(grad_inf, conc, float(c_p), float(lhs), float(rhs), bool(lhs < rhs), heuristic)


def solution_errors(state: PNPState, spec: ProblemSpec, quad_degree: int = 4):
    """``(L2, H1 seminorm, eps-norm)`` errors of the triple against ``spec.exact``."""
    if spec.exact is None:
        return (np.nan, np.nan, np.nan)
    return fem.error_norms(list(state.components), list(spec.exact), quad_degree, spec.epsilon)
