"""scikit-learn style front end for the adaptive solver."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .adapt import MARKERS, SOLVERS, adaptive_loop
from .estimate import EDGE_VARIANTS
from .fem import evaluate
from .validation import check_interval, check_points, check_problem


class AdaptivePNPSolver(BaseEstimator):
    """Adaptive P1 solver for a steady PNP problem.

    ``fit`` takes a :class:`~pnp_afem.pnp.ProblemSpec` (or an example id) and
    runs the adaptive cycle; ``predict`` evaluates ``(p, n, psi)`` of the
    final discrete solution at arbitrary points.

    Parameters
    ----------
    max_dofs : int
        Stop once the total number of unknowns (three per vertex) reaches it.
    theta : float, optional
        Marking parameter; 0.5 for maximum marking, 0.3 for Dorfler.
    marking : {"max", "dorfler"}
    solver : {"two-grid", "full-gummel"}
    initial_subdivision : int
    gummel_tol : float
    relaxation : float
        Under-relaxation of the potential update in Gummel sweeps.
    reenter_gummel : bool
        Resume Gummel iteration after a two-grid step with large residual.
    edge_variant : {"verbatim", "scaled"}
    c_p : float, optional
        Poincare constant for the uniqueness diagnostic.

    Attributes
    ----------
    history_ : LoopHistory
    mesh_ : Mesh
    state_ : PNPState
    breakdown_ : EstimatorBreakdown
    n_levels_ : int
    """

    def __init__(self, max_dofs=100_000, theta=None, marking="max", solver="two-grid",
                 initial_subdivision=2, gummel_tol=1e-5, relaxation=1.0, reenter_gummel=False,
                 edge_variant="verbatim", c_p=None):
        self.max_dofs = max_dofs
        self.theta = theta
        self.marking = marking
        self.solver = solver
        self.initial_subdivision = initial_subdivision
        self.gummel_tol = gummel_tol
        self.relaxation = relaxation
        self.reenter_gummel = reenter_gummel
        self.edge_variant = edge_variant
        self.c_p = c_p

    def _validate_params(self):
        if self.marking not in MARKERS:
            raise ValueError(f"marking must be one of {sorted(MARKERS)}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.edge_variant not in EDGE_VARIANTS:
            raise ValueError(f"edge_variant must be one of {EDGE_VARIANTS}")
        if self.theta is not None:
            check_interval(self.theta, "theta", 0.0, 1.0, closed_high=self.marking == "max")
        check_interval(self.relaxation, "relaxation", 0.0, 1.0)
        if int(self.max_dofs) < 1 or int(self.initial_subdivision) < 1:
            raise ValueError("max_dofs and initial_subdivision must be positive")

    def fit(self, X, y=None):
        """Run the adaptive loop on problem ``X``; ``y`` is ignored."""
        self._validate_params()
        spec = check_problem(X)
        hist = adaptive_loop(
            spec, max_dofs=int(self.max_dofs), theta=self.theta, marking=self.marking,
            solver=self.solver, initial_subdivision=int(self.initial_subdivision),
            gummel_tol=self.gummel_tol, relaxation=self.relaxation,
            reenter_gummel=self.reenter_gummel, edge_variant=self.edge_variant, c_p=self.c_p)
        self.problem_ = spec
        self.history_ = hist
        self.mesh_ = hist.mesh
        self.state_ = hist.state
        self.breakdown_ = hist.breakdown
        self.n_levels_ = len(hist)
        return self

    def predict(self, X):
        """Values ``(p, n, psi)`` at points ``X`` of shape (m, 2); NaN outside."""
        check_is_fitted(self, "state_")
        X = check_points(X)
        return np.column_stack([evaluate(c, X) for c in self.state_.components])

    def score(self, X=None, y=None):
        """Negative final estimator value (larger is better)."""
        check_is_fitted(self, "breakdown_")
        return -self.breakdown_.eta_global
