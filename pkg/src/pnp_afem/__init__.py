"""Adaptive P1 finite elements for the steady Poisson-Nernst-Planck system."""
from .adapt import AdaptiveLoopError, LoopHistory, adaptive_loop, fit_slope
from .estimate import EstimatorBreakdown, estimate, mark_dorfler, mark_maximum
from .fem import FEFunction, Field, eps_norm, error_norms
from .mesh import Mesh, MeshError, bisect, build_mesh, domain_mesh
from .pnp import (ConditionReport, GummelError, PNPState, ProblemSpec, check_uniqueness_condition,
                  gummel_solve, solve_linearized, two_grid_step, weak_residual)
from .problems import example1, example2, example3
from .sparse import SolverError

__version__ = "0.1.0"
