"""SOLVE -> ESTIMATE -> MARK -> REFINE driver."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .estimate import EstimatorBreakdown, estimate, mark_dorfler, mark_maximum
from .mesh import Mesh, bisect, domain_mesh
from .pnp import (PNPState, ProblemSpec, _Operators, check_uniqueness_condition, gummel_solve,
                  prolong_state, solution_errors, two_grid_step)

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("level", "N", "eta", "osc", "err_l2", "err_h1", "err_eps",
               "gummel_iters", "cond_lhs", "cond_rhs")

MARKERS = {"max": mark_maximum, "dorfler": mark_dorfler}
SOLVERS = ("two-grid", "full-gummel")


@dataclass
class LevelRecord:
    level: int
    N: int
    eta: float
    osc: float
    err_l2: float
    err_h1: float
    err_eps: float
    gummel_iters: int
    cond_lhs: float
    cond_rhs: float


@dataclass
class LoopHistory:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    mesh: Optional[Mesh] = None
    state: Optional[PNPState] = None
    breakdown: Optional[EstimatorBreakdown] = None

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def slope(self, name: str, last: int = 5) -> Optional[float]:
        return fit_slope(self.column("N"), self.column(name), last)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                row = asdict(r)
                writer.writerow(["" if isinstance(row[c], float) and np.isnan(row[c])
                                 else (repr(row[c]) if isinstance(row[c], float) else row[c])
                                 for c in CSV_COLUMNS])


def read_csv(path) -> LoopHistory:
    hist = LoopHistory()
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            vals = {k: (float(v) if v != "" else np.nan) for k, v in rec.items()}
            vals["level"] = int(vals["level"])
            vals["N"] = int(vals["N"])
            vals["gummel_iters"] = int(vals["gummel_iters"])
            hist.rows.append(LevelRecord(**vals))
    return hist


def fit_slope(N, values, last: int = 5) -> Optional[float]:
    """Least-squares slope of ``log(values)`` against ``log(N)`` over the
    final ``last`` levels; None when fewer levels exist."""
    N = np.asarray(N, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(N) < last or last < 2:
        return None
    x, y = np.log(N[-last:]), np.log(values[-last:])
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        return None
    return float(np.polyfit(x, y, 1)[0])


class AdaptiveLoopError(RuntimeError):
    def __init__(self, message, history: LoopHistory):
        super().__init__(message)
        self.history = history


def total_dofs(mesh: Mesh) -> int:
    """Three P1 unknowns per vertex."""
    return 3 * mesh.n_vertices


def adaptive_loop(spec: ProblemSpec, max_dofs: int = 100_000, theta: Optional[float] = None,
                  marking: str = "max", solver: str = "two-grid", initial_mesh: Optional[Mesh] = None,
                  initial_subdivision: int = 2, gummel_tol: float = 1e-5, gummel_max_iter: int = 100,
                  relaxation: float = 1.0, reenter_gummel: bool = False, edge_variant: str = "verbatim",
                  c_p: Optional[float] = None, max_levels: int = 200,
                  callback: Optional[Callable] = None) -> LoopHistory:
    """Run the adaptive cycle until ``N >= max_dofs`` or nothing gets marked.

    The coarsest mesh is solved by Gummel iteration; each refined mesh by a
    two-grid step from the previous level (``solver="two-grid"``) or by a
    warm-started Gummel solve (``solver="full-gummel"``).

    ``callback(level, mesh, state, breakdown)`` is called after every
    estimate. Solver failures raise AdaptiveLoopError carrying the partial
    history.
    """
    if marking not in MARKERS:
        raise ValueError(f"marking must be one of {sorted(MARKERS)}")
    if solver not in SOLVERS:
        raise ValueError(f"solver must be one of {SOLVERS}")
    if theta is None:
        theta = 0.5 if marking == "max" else 0.3
    mark = MARKERS[marking]
    mesh = initial_mesh if initial_mesh is not None else domain_mesh(spec.domain, initial_subdivision)

    hist = LoopHistory(metadata=dict(example=spec.name, epsilon=spec.epsilon, theta=theta,
                                     marking=marking, solver=solver, max_dofs=max_dofs))
    t0 = time.perf_counter()
    state = refinement = None
    try:
        for level in range(max_levels):
            if level == 0:
                state, iters = gummel_solve(mesh, spec, tol=gummel_tol, max_iter=gummel_max_iter,
                                            relaxation=relaxation)
            elif solver == "two-grid":
                state, iters = two_grid_step(state, refinement, spec, reenter_gummel=reenter_gummel,
                                             gummel_tol=gummel_tol, relaxation=relaxation)
            else:
                warm = prolong_state(state, refinement)
                ops = _Operators(mesh, spec)
                warm = PNPState.from_arrays(mesh, *(ops.with_boundary(c.values, k)
                                                    for k, c in enumerate(warm.components)))
                state, iters = gummel_solve(mesh, spec, warm, tol=gummel_tol, max_iter=gummel_max_iter,
                                            relaxation=relaxation, _ops=ops)
            breakdown = estimate(state, spec, edge_variant)
            report = check_uniqueness_condition(state, spec.epsilon, c_p)
            errs = solution_errors(state, spec)
            rec = LevelRecord(level, total_dofs(mesh), breakdown.eta_global, breakdown.osc_global,
                              *errs, int(iters), report.lhs, report.rhs)
            hist.rows.append(rec)
            hist.mesh, hist.state, hist.breakdown = mesh, state, breakdown
            logger.info("level %d: N=%d eta=%.4e err_eps=%.4e", level, rec.N, rec.eta, rec.err_eps)
            if callback is not None:
                callback(level, mesh, state, breakdown)
            if rec.N >= max_dofs:
                break
            marked = mark(breakdown, theta)
            if len(marked) == 0:
                break
            mesh, refinement = bisect(mesh, marked, return_refinement=True)
    except Exception as exc:
        hist.metadata["wall_time"] = time.perf_counter() - t0
        raise AdaptiveLoopError(f"adaptive loop aborted at level {len(hist.rows)}: {exc}", hist) from exc
    hist.metadata["wall_time"] = time.perf_counter() - t0
    return hist
