"""
Static computation graphs for reverse-mode differentiation

A Graph is an immutable, append-only list of primitive applications. Nodes
refer to their parents by position, so a node's parents always precede it and
the list is acyclic by construction. Values are never stored on the graph;
every evaluation builds its own tape (see engine.py), which makes a single
Graph safe to evaluate concurrently with different bindings.
"""
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .primitives import PRIMITIVES


@dataclass(frozen=True)
class Ref:
    """Handle to a node inside a GraphBuilder"""

    index: int


@dataclass(frozen=True)
class Node:
    """One primitive application"""

    op: str
    parents: tuple[int, ...] = ()
    attrs: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Graph:
    """Immutable graph with named leaves and one scalar output"""

    nodes: tuple[Node, ...]
    inputs: tuple[str, ...]
    output: int
    names: Mapping[str, int] = field(default_factory=dict)

    def input_index(self, name: str) -> int:
        """Position of the leaf node bound to name"""
        for i, node in enumerate(self.nodes):
            if node.op == "input" and node.attrs["name"] == name:
                return i
        raise KeyError(f"Graph has no input '{name}'")

    def describe(self, index: int) -> str:
        """Short human-readable label for error messages"""
        node = self.nodes[index]
        if node.op == "input":
            return f"node {index} (input '{node.attrs['name']}')"
        return f"node {index} ({node.op})"


class GraphBuilder:
    """Records primitive applications and freezes them into a Graph"""

    def __init__(self):
        self._nodes: list[Node] = []
        self._inputs: list[str] = []
        self._names: dict[str, int] = {}

    def _push(self, op: str, parents: Sequence[Ref] = (), **attrs) -> Ref:
        if op not in PRIMITIVES and op not in ("input", "const"):
            raise ValueError(f"Unknown primitive '{op}'")
        for parent in parents:
            if not 0 <= parent.index < len(self._nodes):
                raise ValueError(f"Reference {parent.index} does not belong to this builder")
        self._nodes.append(
            Node(op, tuple(p.index for p in parents), MappingProxyType(dict(attrs)))
        )
        return Ref(len(self._nodes) - 1)

    # Leaves

    def input(self, name: str) -> Ref:
        """Declare a named leaf tensor"""
        if name in self._inputs:
            raise ValueError(f"Input '{name}' declared twice")
        self._inputs.append(name)
        return self._push("input", name=name)

    def constant(self, value) -> Ref:
        """Embed a constant tensor (no gradient flows into it)"""
        array = np.array(value, dtype=np.float64)
        array.setflags(write=False)
        return self._push("const", value=array)

    # Primitives

    def add(self, a: Ref, b: Ref) -> Ref:
        return self._push("add", (a, b))

    def mul(self, a: Ref, b: Ref) -> Ref:
        return self._push("mul", (a, b))

    def matmul(self, a: Ref, b: Ref) -> Ref:
        """Contract the last axis of a with the first axis of a vector or matrix b"""
        return self._push("matmul", (a, b))

    def conv1d(self, x: Ref, w: Ref) -> Ref:
        """Zero-padded 1-d convolution over the instance axis, length preserving"""
        return self._push("conv1d", (x, w))

    def relu(self, x: Ref) -> Ref:
        return self._push("relu", (x,))

    def sigmoid(self, x: Ref) -> Ref:
        return self._push("sigmoid", (x,))

    def log_sigmoid(self, x: Ref) -> Ref:
        return self._push("log_sigmoid", (x,))

    def log(self, x: Ref) -> Ref:
        return self._push("log", (x,))

    def log1mexp(self, x: Ref) -> Ref:
        return self._push("log1mexp", (x,))

    def exp(self, x: Ref) -> Ref:
        return self._push("exp", (x,))

    def softmax(self, x: Ref) -> Ref:
        """Softmax over the last axis"""
        return self._push("softmax", (x,))

    def sum(self, x: Ref, axis: Optional[int] = None) -> Ref:
        return self._push("sum", (x,), axis=axis)

    def max(self, x: Ref, axis: Optional[int] = None) -> Ref:
        return self._push("max", (x,), axis=axis)

    def scale(self, x: Ref, factor: float) -> Ref:
        return self._push("scale", (x,), factor=float(factor))

    def power(self, x: Ref, exponent: float) -> Ref:
        return self._push("power", (x,), exponent=float(exponent))

    def stack(self, refs: Sequence[Ref]) -> Ref:
        """Stack equally shaped tensors along a new trailing axis"""
        if not refs:
            raise ValueError("stack needs at least one tensor")
        return self._push("stack", tuple(refs))

    # Composites

    def sub(self, a: Ref, b: Ref) -> Ref:
        return self.add(a, self.scale(b, -1.0))

    def one_minus(self, x: Ref) -> Ref:
        return self.add(self.constant(1.0), self.scale(x, -1.0))

    def mean(self, x: Ref, axis: Optional[int] = None, count: Optional[int] = None) -> Ref:
        """Mean over an axis; count is the number of reduced elements"""
        if count is None:
            raise ValueError("mean needs the reduced element count")
        return self.scale(self.sum(x, axis=axis), 1.0 / count)

    # Naming and freezing

    def name(self, ref: Ref, label: str) -> Ref:
        """Attach a label so trace() can report this node's value"""
        self._names[label] = ref.index
        return ref

    def build(self, output: Ref) -> Graph:
        """Freeze the recorded nodes with the given scalar output"""
        if not 0 <= output.index < len(self._nodes):
            raise ValueError(f"Output reference {output.index} is out of range")
        return Graph(
            nodes=tuple(self._nodes),
            inputs=tuple(self._inputs),
            output=output.index,
            names=MappingProxyType(dict(self._names)),
        )
