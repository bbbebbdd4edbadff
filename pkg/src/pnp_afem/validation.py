"""Input checks shared by the estimator front end and the CLI."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array

from .pnp import ProblemSpec
from .problems import get_example


def check_problem(problem, epsilon=None) -> ProblemSpec:
    """Accept a ProblemSpec or an example id (1, 2 or 3)."""
    if isinstance(problem, ProblemSpec):
        return problem
    if isinstance(problem, numbers.Integral):
        return get_example(int(problem), epsilon)
    raise TypeError(f"expected a ProblemSpec or an example id, got {type(problem).__name__}")


def check_points(X) -> np.ndarray:
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 2:
        raise ValueError(f"points must have 2 columns, got {X.shape[1]}")
    return X


def check_interval(value, name, low, high, closed_high=True):
    if not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number")
    ok = low < value <= high if closed_high else low < value < high
    if not ok:
        bracket = "]" if closed_high else ")"
        raise ValueError(f"{name} must lie in ({low}, {high}{bracket}, got {value}")
    return float(value)
