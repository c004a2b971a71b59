"""Gradient-vanishing analysis of traditional MIL and Sharp MIL"""

from .gradlab import (
    GradPoint,
    Lemma2bRecord,
    VanishReport,
    bag_loss_graph,
    containment_ratio,
    grad_smil_closed,
    grad_traditional_closed,
    instance_grads,
    lemma2b_case,
    lemma2b_point,
    smil_instance_grads,
    traditional_instance_grads,
    vanish_fraction,
)
from .surface import SURFACE_HEADER, GradSurface, export_surface, sharp_m2, surface_m2, traditional_m2

__all__ = [
    "GradPoint",
    "Lemma2bRecord",
    "VanishReport",
    "bag_loss_graph",
    "containment_ratio",
    "grad_smil_closed",
    "grad_traditional_closed",
    "instance_grads",
    "lemma2b_case",
    "lemma2b_point",
    "smil_instance_grads",
    "traditional_instance_grads",
    "vanish_fraction",
    "SURFACE_HEADER",
    "GradSurface",
    "export_surface",
    "sharp_m2",
    "surface_m2",
    "traditional_m2",
]
