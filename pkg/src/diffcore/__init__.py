"""Reverse-mode automatic differentiation over float64 tensors"""

from .graph import Graph, GraphBuilder, Node, Ref
from .primitives import PRIMITIVES, Primitive, conv1d_forward, conv_padding, stable_sigmoid
from .engine import backward, forward, trace, value_and_grad
from .gradcheck import GradReport, finite_diff, gradcheck, relative_error
from .sweep import PrimitiveCase, case_graph, primitive_cases, primitive_sweep

__all__ = [
    "Graph",
    "GraphBuilder",
    "Node",
    "Ref",
    "PRIMITIVES",
    "Primitive",
    "conv1d_forward",
    "conv_padding",
    "stable_sigmoid",
    "forward",
    "backward",
    "value_and_grad",
    "trace",
    "GradReport",
    "finite_diff",
    "gradcheck",
    "relative_error",
    "PrimitiveCase",
    "case_graph",
    "primitive_cases",
    "primitive_sweep",
]
