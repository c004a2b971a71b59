"""
M=2 gradient surfaces dL/dp^1 over a (p^1, p^2) grid
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.utils.errors import NumericalError
from src.utils.serialization import write_csv

from .gradlab import smil_instance_grads, traditional_instance_grads

logger = logging.getLogger(__name__)

SURFACE_HEADER = ("p1", "p2", "grad_traditional", "grad_sharp")

# Grid axes must stay inside [AXIS_MIN, AXIS_MAX]
AXIS_MIN = 1e-3
AXIS_MAX = 1.0 - 1e-3

# Literal and generic closed forms must agree cell-wise to this relative error
CROSS_CHECK_RTOL = 1e-10


@dataclass(frozen=True)
class GradSurface:
    """traditional[i, k] and sharp[i, k] hold dL/dp^1 at (axis[i], axis[k])"""

    n: int
    lo: float
    hi: float
    axis: np.ndarray
    traditional: np.ndarray
    sharp: np.ndarray

    def rows(self):
        """(p1, p2, traditional, sharp) in p1-major order"""
        for i, p1 in enumerate(self.axis):
            for k, p2 in enumerate(self.axis):
                yield float(p1), float(p2), float(self.traditional[i, k]), float(self.sharp[i, k])


def traditional_m2(p1, p2):
    """(p^2 - 1) / (1 - (1 - p^1)(1 - p^2))"""
    return (p2 - 1.0) / (1.0 - (1.0 - p1) * (1.0 - p2))


def sharp_m2(p1, p2):
    """(p^2 - 1) / (p^1 (2 p^1 p^2 + 1 - p^1 - p^2))"""
    return (p2 - 1.0) / (p1 * (2.0 * p1 * p2 + 1.0 - p1 - p2))


def _max_rel(a: np.ndarray, b: np.ndarray) -> float:
    return float((np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)).max())


def surface_m2(n: int = 201, lo: float = 0.005, hi: float = 0.995) -> GradSurface:
    """
    Fill both gradient surfaces from the two-instance expressions

    Every cell is cross-checked against the general M closed forms.

    Args:
        n: Points per axis, >= 2
        lo: First axis value, >= 1e-3
        hi: Last axis value, <= 1 - 1e-3 and > lo

    Returns:
        GradSurface
    """
    if n < 2:
        raise ValueError(f"Surface needs n >= 2 points per axis, got {n}")
    if not AXIS_MIN <= lo < hi <= AXIS_MAX:
        raise ValueError(f"Surface range must satisfy {AXIS_MIN} <= lo < hi <= {AXIS_MAX}, got [{lo}, {hi}]")

    axis = np.linspace(lo, hi, n)
    p1, p2 = np.meshgrid(axis, axis, indexing="ij")
    traditional = traditional_m2(p1, p2)
    sharp = sharp_m2(p1, p2)

    P = np.stack([p1, p2], axis=-1)
    for label, literal, generic in (
        ("traditional", traditional, traditional_instance_grads(P)[..., 0]),
        ("sharp", sharp, smil_instance_grads(P)[..., 0]),
    ):
        error = _max_rel(literal, generic)
        if not error <= CROSS_CHECK_RTOL:
            raise NumericalError(f"{label} surface disagrees with the closed form: max rel error {error:.3e}")

    logger.info(f"Built {n}x{n} gradient surface over [{lo}, {hi}]")
    return GradSurface(n=n, lo=float(lo), hi=float(hi), axis=axis, traditional=traditional, sharp=sharp)


def export_surface(surface: GradSurface, path: str | Path) -> Path:
    """Write the surface as CSV, one row per grid cell"""
    written = write_csv(path, SURFACE_HEADER, surface.rows())
    logger.info(f"Wrote {surface.n * surface.n} surface rows to {written}")
    return written
