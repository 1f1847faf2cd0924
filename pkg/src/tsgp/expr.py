"""Expression trees over {+, -, *, protected /}, variables and a constant grid.

Trees are immutable: nodes carry their token symbol and a tuple of children.
The textual form used everywhere (logs, corpus files, model vocabulary) is the
space-separated prefix enumeration, e.g. ``ADD v1 MUL v2 C+0.3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPERATORS = ("ADD", "SUB", "MUL", "PDIV")

FULL = "full"
GROW = "grow"


class ExprError(Exception):
    """Base class for expression-level failures."""


class StructureError(ExprError):
    """Tree references a variable outside the input dimensionality."""


class ParseError(ExprError):
    """Base class for prefix-parsing failures."""


class IncompleteSequenceError(ParseError):
    """Tokens exhausted while operator slots remain open."""


class TrailingTokensError(ParseError):
    """Tokens remain after the tree closed."""


class UnknownTokenError(ParseError):
    """Token not present in the primitive set."""


def const_token(value: float) -> str:
    return f"C{value:+.1f}"


@dataclass(frozen=True)
class PrimitiveSet:
    """Operators, variables v1..vd and the 11-value constant grid."""

    n_variables: int = 4
    operators: tuple = OPERATORS
    constant_values: tuple = tuple(round(-0.5 + 0.1 * i, 1) for i in range(11))

    @property
    def variables(self) -> tuple:
        return tuple(f"v{i}" for i in range(1, self.n_variables + 1))

    @property
    def constants(self) -> tuple:
        return tuple(const_token(v) for v in self.constant_values)

    @property
    def terminals(self) -> tuple:
        return self.variables + self.constants

    def constant_value(self, token: str) -> float:
        return float(token[1:])

    def is_operator(self, token: str) -> bool:
        return token in self.operators

    def is_terminal(self, token: str) -> bool:
        return token in self.terminals


@dataclass(frozen=True)
class Node:
    """One tree node; operators have exactly two children, terminals none."""

    symbol: str
    children: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.symbol in OPERATORS:
            if len(self.children) != 2:
                raise StructureError(
                    f"operator {self.symbol} needs 2 children, got {len(self.children)}"
                )
        elif self.children:
            raise StructureError(f"terminal {self.symbol} cannot have children")

    @property
    def is_leaf(self) -> bool:
        return not self.children


# A tree is just its root node.
ExprTree = Node


def size(tree: Node) -> int:
    """Number of nodes."""
    n = 0
    stack = [tree]
    while stack:
        node = stack.pop()
        n += 1
        stack.extend(node.children)
    return n


def depth(tree: Node) -> int:
    """Edges on the longest root-to-leaf path; a single node has depth 0."""
    best = 0
    stack = [(tree, 0)]
    while stack:
        node, d = stack.pop()
        if node.is_leaf:
            best = max(best, d)
        else:
            for child in node.children:
                stack.append((child, d + 1))
    return best


def serialize_prefix(tree: Node) -> list:
    """Preorder token enumeration (root, left, right)."""
    out = []
    stack = [tree]
    while stack:
        node = stack.pop()
        out.append(node.symbol)
        # push right first so left is visited first
        stack.extend(reversed(node.children))
    return out


def to_string(tree: Node) -> str:
    return " ".join(serialize_prefix(tree))


def parse_prefix(tokens, prims: PrimitiveSet = None) -> Node:
    """Parse a preorder token sequence back into the unique tree it encodes."""
    prims = prims or PrimitiveSet()
    pos = 0

    def build():
        nonlocal pos
        if pos >= len(tokens):
            raise IncompleteSequenceError("tokens exhausted with open operator slots")
        tok = tokens[pos]
        pos += 1
        if prims.is_operator(tok):
            left = build()
            right = build()
            return Node(tok, (left, right))
        if prims.is_terminal(tok):
            return Node(tok)
        raise UnknownTokenError(f"unknown token {tok!r}")

    tree = build()
    if pos != len(tokens):
        raise TrailingTokensError(f"{len(tokens) - pos} tokens left after tree closed")
    return tree


def from_string(text: str, prims: PrimitiveSet = None) -> Node:
    return parse_prefix(text.split(), prims)


def evaluate(tree: Node, inputs: np.ndarray) -> np.ndarray:
    """Evaluate the tree row-wise on an (m, d) input matrix.

    Division with a denominator that is exactly zero yields 1 for that
    subexpression. Overflow is not clamped; non-finite outputs are the
    caller's concern (fitness policy lives in :mod:`tsgp.semantics`).
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2:
        raise ValueError("inputs must be a 2-D matrix")
    m, d = inputs.shape

    def rec(node: Node) -> np.ndarray:
        sym = node.symbol
        if node.is_leaf:
            if sym.startswith("v"):
                idx = int(sym[1:])
                if not 1 <= idx <= d:
                    raise StructureError(f"variable {sym} out of range for d={d}")
                return inputs[:, idx - 1]
            return np.full(m, float(sym[1:]))
        a = rec(node.children[0])
        b = rec(node.children[1])
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if sym == "ADD":
                return a + b
            if sym == "SUB":
                return a - b
            if sym == "MUL":
                return a * b
            # protected division: exact-zero denominator -> 1
            out = np.ones(m)
            np.divide(a, b, out=out, where=b != 0.0)
            return out

    return rec(tree)


def random_tree(method: str, depth_min: int, depth_max: int,
                prims: PrimitiveSet, rng: np.random.Generator) -> Node:
    """Generate a random tree; the target depth is uniform in [depth_min, depth_max].

    FULL places every leaf at exactly the sampled depth. GROW may stop earlier
    once depth_min is reached, choosing a terminal with probability
    |terminals| / (|terminals| + |operators|).
    """
    if not 0 <= depth_min <= depth_max:
        raise ValueError("need 0 <= depth_min <= depth_max")
    height = int(rng.integers(depth_min, depth_max + 1))
    terminals = prims.terminals
    t_ratio = len(terminals) / (len(terminals) + len(prims.operators))

    def gen(d: int) -> Node:
        if d == height:
            return Node(terminals[rng.integers(len(terminals))])
        if method == GROW and d >= depth_min and rng.random() < t_ratio:
            return Node(terminals[rng.integers(len(terminals))])
        op = prims.operators[rng.integers(len(prims.operators))]
        return Node(op, (gen(d + 1), gen(d + 1)))

    return gen(0)


def ramped_half_and_half(n: int, depth_min: int, depth_max: int,
                         prims: PrimitiveSet, rng: np.random.Generator) -> list:
    """Population initialization: per individual, FULL or GROW with equal odds."""
    return [
        random_tree(FULL if rng.random() < 0.5 else GROW, depth_min, depth_max, prims, rng)
        for _ in range(n)
    ]
