"""
Tape evaluation: forward values and reverse-mode adjoints

The tape is the list of node values produced by one evaluation. It lives only
for the duration of a call, so graphs stay immutable and calls are
independent.
"""
import logging
from typing import Iterable, Mapping, Optional

import numpy as np

from src.utils.errors import NumericalError, ShapeError, UnboundInputError

from .graph import Graph
from .primitives import PRIMITIVES

logger = logging.getLogger(__name__)

Bindings = Mapping[str, np.ndarray]


def _as_tensor(name: str, value) -> np.ndarray:
    array = np.asarray(value, dtype=np.float64)
    if not np.isfinite(array).all():
        raise NumericalError(f"input '{name}' has non-finite entries")
    return array


def _evaluate(graph: Graph, bindings: Bindings) -> list[np.ndarray]:
    """Run every node in order and return the tape"""
    tape: list[np.ndarray] = []
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        for i, node in enumerate(graph.nodes):
            if node.op == "input":
                name = node.attrs["name"]
                if name not in bindings:
                    raise UnboundInputError(f"input '{name}' is not bound")
                tape.append(_as_tensor(name, bindings[name]))
                continue
            if node.op == "const":
                tape.append(node.attrs["value"])
                continue
            primitive = PRIMITIVES[node.op]
            args = [tape[p] for p in node.parents]
            try:
                out = np.asarray(primitive.forward(*args, **node.attrs), dtype=np.float64)
            except ShapeError as e:
                raise ShapeError(f"{graph.describe(i)}: {e}") from None
            except NumericalError as e:
                raise NumericalError(f"{graph.describe(i)}: {e}") from None
            if not np.isfinite(out).all():
                raise NumericalError(f"{graph.describe(i)} produced non-finite values")
            tape.append(out)
    return tape


def forward(graph: Graph, bindings: Bindings) -> float:
    """
    Evaluate the graph's scalar output

    Args:
        graph: Graph to evaluate
        bindings: Tensor for every named input

    Returns:
        The output value
    """
    tape = _evaluate(graph, bindings)
    out = tape[graph.output]
    if out.ndim != 0:
        raise ShapeError(f"{graph.describe(graph.output)}: output has shape {out.shape}, expected scalar")
    return float(out)


def value_and_grad(
    graph: Graph,
    bindings: Bindings,
    wrt: Optional[Iterable[str]] = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """
    Evaluate the output and its gradient with respect to the inputs

    Args:
        graph: Graph to differentiate
        bindings: Tensor for every named input
        wrt: Inputs to report (defaults to all); unused inputs get zero tensors

    Returns:
        Tuple of (output value, gradient per input name)
    """
    tape = _evaluate(graph, bindings)
    out = tape[graph.output]
    if out.ndim != 0:
        raise ShapeError(f"{graph.describe(graph.output)}: output has shape {out.shape}, expected scalar")

    adjoints: list[Optional[np.ndarray]] = [None] * len(graph.nodes)
    adjoints[graph.output] = np.ones((), dtype=np.float64)

    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        for i in range(graph.output, -1, -1):
            g = adjoints[i]
            node = graph.nodes[i]
            if g is None or node.op in ("input", "const"):
                continue
            primitive = PRIMITIVES[node.op]
            args = [tape[p] for p in node.parents]
            try:
                grads = primitive.vjp(g, tape[i], *args, **node.attrs)
            except ShapeError as e:
                raise ShapeError(f"{graph.describe(i)} (adjoint): {e}") from None
            for parent, grad in zip(node.parents, grads):
                grad = np.asarray(grad, dtype=np.float64)
                if adjoints[parent] is None:
                    adjoints[parent] = grad
                else:
                    adjoints[parent] = adjoints[parent] + grad

    names = list(graph.inputs) if wrt is None else list(wrt)
    result = {}
    for name in names:
        index = graph.input_index(name)
        grad = adjoints[index]
        result[name] = np.zeros_like(tape[index]) if grad is None else grad
    return float(out), result


def backward(graph: Graph, bindings: Bindings) -> dict[str, np.ndarray]:
    """Gradient of the output with respect to every input"""
    return value_and_grad(graph, bindings)[1]


def trace(
    graph: Graph,
    bindings: Bindings,
    names: Optional[Iterable[str]] = None,
) -> dict[str, np.ndarray]:
    """
    Evaluate the graph and report named intermediate values

    Args:
        graph: Graph to evaluate
        bindings: Tensor for every named input
        names: Labels to report (defaults to every label in the graph)

    Returns:
        Value per label
    """
    tape = _evaluate(graph, bindings)
    labels = list(graph.names) if names is None else list(names)
    missing = [label for label in labels if label not in graph.names]
    if missing:
        raise KeyError(f"Graph has no labeled nodes {missing}")
    return {label: tape[graph.names[label]] for label in labels}
