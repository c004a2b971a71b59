"""
Finite-difference sweep over every registered primitive

Each case feeds random inputs from the primitive's valid domain through the
primitive and contracts the output with fixed random weights, giving a scalar
whose gradient exercises the primitive's adjoint rule.
"""
import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from src.utils.rng import derive_rng

from .gradcheck import GradReport, gradcheck
from .graph import Graph, GraphBuilder
from .primitives import PRIMITIVES

logger = logging.getLogger(__name__)

INPUT_RANGE = 3.0
# central differences step 1e-5, so kinks and ties must sit well outside it
KINK_GAP = 1e-3


@dataclass(frozen=True)
class PrimitiveCase:
    """One primitive applied to named random inputs"""

    op: str
    inputs: dict[str, np.ndarray]
    attrs: dict[str, Any] = field(default_factory=dict)
    variant: str = ""

    @property
    def label(self) -> str:
        return f"{self.op}[{self.variant}]" if self.variant else self.op


def primitive_cases(rng: np.random.Generator) -> list[PrimitiveCase]:
    """Cases covering every primitive, inputs on [-3, 3] clipped to each primitive's domain"""

    def uniform(lo, hi, *shape):
        return rng.uniform(lo, hi, size=shape)

    def unit(*shape):
        return uniform(-INPUT_RANGE, INPUT_RANGE, *shape)

    def off_kink(*shape):
        x = unit(*shape)
        near = np.abs(x) < KINK_GAP
        while near.any():
            x[near] = rng.uniform(-INPUT_RANGE, INPUT_RANGE, size=int(near.sum()))
            near = np.abs(x) < KINK_GAP
        return x

    def separated(*shape):
        while True:
            x = unit(*shape)
            if np.diff(np.sort(x, axis=None)).min() > KINK_GAP:
                return x

    return [
        PrimitiveCase("add", {"a": unit(3, 4), "b": unit(4)}, variant="broadcast"),
        PrimitiveCase("mul", {"a": unit(3, 4), "b": unit(3, 1)}, variant="broadcast"),
        PrimitiveCase("matmul", {"a": unit(2, 3, 4), "b": unit(4)}, variant="vector"),
        PrimitiveCase("matmul", {"a": unit(2, 3, 4), "b": unit(4, 5)}, variant="matrix"),
        PrimitiveCase("conv1d", {"x": unit(5, 3), "w": unit(1, 3, 2)}, variant="k1"),
        PrimitiveCase("conv1d", {"x": unit(2, 5, 3), "w": unit(2, 3, 4)}, variant="k2"),
        PrimitiveCase("conv1d", {"x": unit(2, 6, 3), "w": unit(3, 3, 2)}, variant="k3"),
        PrimitiveCase("relu", {"x": off_kink(3, 4)}),
        PrimitiveCase("sigmoid", {"x": unit(3, 4)}),
        PrimitiveCase("log_sigmoid", {"x": unit(3, 4)}),
        PrimitiveCase("log", {"x": uniform(0.05, INPUT_RANGE, 3, 4)}),
        PrimitiveCase("log1mexp", {"x": uniform(-INPUT_RANGE, -0.05, 3, 4)}),
        PrimitiveCase("exp", {"x": unit(3, 4)}),
        PrimitiveCase("softmax", {"x": unit(3, 5)}),
        PrimitiveCase("sum", {"x": unit(3, 4)}, {"axis": 1}, variant="axis"),
        PrimitiveCase("sum", {"x": unit(3, 4)}, {"axis": None}, variant="all"),
        PrimitiveCase("max", {"x": separated(3, 4)}, {"axis": 1}, variant="axis"),
        PrimitiveCase("max", {"x": separated(3, 4)}, {"axis": None}, variant="all"),
        PrimitiveCase("scale", {"x": unit(3, 4)}, {"factor": -2.5}),
        PrimitiveCase("power", {"x": uniform(0.05, INPUT_RANGE, 3, 4)}, {"exponent": 1.7}),
        PrimitiveCase("stack", {"a": unit(3), "b": unit(3), "c": unit(3)}),
    ]


def case_graph(case: PrimitiveCase, weights: np.ndarray) -> Graph:
    """sum(op(inputs) * weights)"""
    g = GraphBuilder()
    refs = [g.input(name) for name in case.inputs]
    if case.op == "stack":
        out = g.stack(refs)
    else:
        out = getattr(g, case.op)(*refs, **case.attrs)
    return g.build(g.sum(g.mul(out, g.constant(weights))))


def primitive_sweep(seed: int = 0, rel_tol: float = 1e-4, points: int = 1) -> list[GradReport]:
    """
    Gradcheck every case of primitive_cases

    Args:
        seed: Seed of the random inputs and contraction weights
        rel_tol: Largest accepted relative error
        points: Number of independent input draws per case

    Returns:
        One GradReport per case and draw
    """
    if points < 1:
        raise ValueError(f"points must be >= 1, got {points}")
    rng = derive_rng(seed, "gradcheck")
    reports = []
    for _ in range(points):
        for case in primitive_cases(rng):
            values = list(case.inputs.values())
            shape = np.shape(PRIMITIVES[case.op].forward(*values, **case.attrs))
            graph = case_graph(case, rng.standard_normal(shape))
            reports.append(gradcheck(graph, case.inputs, rel_tol=rel_tol, label=case.label))
    failed = sorted({r.label for r in reports if not r.passed})
    passed = sum(r.passed for r in reports)
    summary = f"Primitive sweep: {passed}/{len(reports)} passed"
    logger.info(f"{summary}, failed {failed}" if failed else summary)
    return reports
