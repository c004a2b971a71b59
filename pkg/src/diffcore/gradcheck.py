"""
Finite-difference oracle and analytic gradient checking
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from src.utils.errors import NumericalError

from .engine import Bindings, backward, forward
from .graph import Graph

logger = logging.getLogger(__name__)

# Denominator floor for relative errors
REL_FLOOR = 1e-12


@dataclass
class GradReport:
    """Analytic vs finite-difference comparison for a set of inputs"""

    analytic: dict[str, np.ndarray]
    numeric: dict[str, np.ndarray]
    max_rel_error: float
    tolerance: float
    passed: bool
    worst: Optional[str] = None
    label: str = ""
    details: dict[str, float] = field(default_factory=dict)

    def summary(self) -> dict:
        """JSON-friendly summary without the gradient tensors"""
        return {
            "label": self.label,
            "passed": self.passed,
            "max_rel_error": self.max_rel_error,
            "tolerance": self.tolerance,
            "worst": self.worst,
        }


def finite_diff(
    function: Callable[[np.ndarray], float],
    point,
    h: float = 1e-5,
) -> np.ndarray:
    """
    Central-difference gradient of a scalar function

    Args:
        function: Maps a tensor shaped like point to a scalar
        point: Where to differentiate
        h: Step size, > 0

    Returns:
        Gradient tensor shaped like point
    """
    if not h > 0:
        raise ValueError(f"Step size must be positive, got {h}")
    x = np.array(point, dtype=np.float64)
    grad = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        original = x[idx]
        x[idx] = original + h
        f_plus = float(function(x.copy()))
        x[idx] = original - h
        f_minus = float(function(x.copy()))
        x[idx] = original
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NumericalError(f"finite_diff: non-finite function value at coordinate {idx}")
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, abs_tol: float = 0.0) -> np.ndarray:
    """Elementwise |a-b| / max(|a|,|b|,1e-12), zero where |a-b| <= abs_tol"""
    diff = np.abs(a - b)
    rel = diff / np.maximum(np.maximum(np.abs(a), np.abs(b)), REL_FLOOR)
    return np.where(diff <= abs_tol, 0.0, rel)


def gradcheck(
    graph: Graph,
    bindings: Bindings,
    abs_tol: float = 1e-8,
    rel_tol: float = 1e-4,
    h: float = 1e-5,
    wrt: Optional[Sequence[str]] = None,
    label: str = "",
) -> GradReport:
    """
    Compare backward() against finite differences of forward()

    Args:
        graph: Graph to check
        bindings: Evaluation point
        abs_tol: Absolute differences at or below this count as agreement
        rel_tol: Largest accepted relative error
        h: Finite-difference step
        wrt: Inputs to check (defaults to all)
        label: Name carried into the report

    Returns:
        GradReport; passed iff the largest relative error is within rel_tol
    """
    analytic = backward(graph, bindings)
    names = list(graph.inputs) if wrt is None else list(wrt)

    numeric: dict[str, np.ndarray] = {}
    details: dict[str, float] = {}
    worst_error, worst = 0.0, None
    for name in names:

        def _f(x, _name=name):
            return forward(graph, {**bindings, _name: x})

        numeric[name] = finite_diff(_f, bindings[name], h)
        rel = relative_error(analytic[name], numeric[name], abs_tol)
        error = float(rel.max()) if rel.size else 0.0
        details[name] = error
        if rel.size and (worst is None or error > worst_error):
            worst_error = error
            worst = f"{name}{tuple(int(i) for i in np.unravel_index(int(np.argmax(rel)), rel.shape))}"

    passed = worst_error <= rel_tol
    if not passed:
        logger.warning(f"Gradient check {label or 'graph'} failed: max rel error {worst_error:.3e} at {worst}")
    return GradReport(
        analytic={n: analytic[n] for n in names},
        numeric=numeric,
        max_rel_error=worst_error,
        tolerance=rel_tol,
        passed=passed,
        worst=worst,
        label=label,
        details=details,
    )
