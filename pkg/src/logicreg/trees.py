"""Boolean expression trees over binary covariates.

Trees are immutable: leaves carry a covariate index and a negation flag,
internal nodes carry an AND/OR operator, two children and a negation flag.
Equivalence (De Morgan, commutativity, associativity, absorption) is decided
through truth-table canonical keys, never by rewriting the stored structure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

AND = "&"
OR = "|"

MAX_KEY_LEAVES = 16


class TreeError(ValueError):
    """Structural error in a tree operation (bad index, malformed syntax)."""


class KeyCapacityError(TreeError):
    """Tree has too many distinct leaves for exact truth-table keying."""


@dataclass(frozen=True)
class LogicTree:
    """A Boolean expression: either a single leaf or an AND/OR of two subtrees."""

    op: str | None = None          # None for a leaf, AND or OR otherwise
    index: int = -1                # covariate index, leaves only
    neg: bool = False
    left: "LogicTree | None" = None
    right: "LogicTree | None" = None

    def __post_init__(self):
        if self.op is None:
            if self.index < 0:
                raise TreeError("leaf requires a nonnegative covariate index")
        elif self.op in (AND, OR):
            if self.left is None or self.right is None:
                raise TreeError("binary node requires two children")
        else:
            raise TreeError(f"unknown operator {self.op!r}")

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    @property
    def size(self) -> int:
        """Number of leaf occurrences."""
        if self.is_leaf:
            return 1
        return self.left.size + self.right.size

    def negate(self) -> "LogicTree":
        if self.is_leaf:
            return LogicTree(index=self.index, neg=not self.neg)
        return LogicTree(op=self.op, left=self.left, right=self.right,
                         neg=not self.neg)

    def leaf_indices(self) -> list[int]:
        """Leaf covariate indices in left-to-right order (with repeats)."""
        if self.is_leaf:
            return [self.index]
        return self.left.leaf_indices() + self.right.leaf_indices()

    def leaf_set(self) -> frozenset[int]:
        return frozenset(self.leaf_indices())

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Evaluate the expression on every row of an n-by-m 0/1 matrix.

        Returns a uint8 vector of length n.  Raises TreeError when a leaf
        index is out of range for the matrix.
        """
        X = np.asarray(X)
        if X.ndim == 1:
            return self.evaluate(X[None, :])[0]
        if self.is_leaf:
            if self.index >= X.shape[1]:
                raise TreeError(
                    f"leaf index {self.index} out of range for m={X.shape[1]}")
            v = X[:, self.index].astype(np.uint8)
        elif self.op == AND:
            v = self.left.evaluate(X) & self.right.evaluate(X)
        else:
            v = self.left.evaluate(X) | self.right.evaluate(X)
        if self.neg:
            v = (1 - v).astype(np.uint8)
        return v

    def __str__(self) -> str:
        return format_tree(self)


def leaf(index: int, neg: bool = False) -> LogicTree:
    return LogicTree(index=index, neg=neg)


def conj(a: LogicTree, b: LogicTree) -> LogicTree:
    return LogicTree(op=AND, left=a, right=b)


def disj(a: LogicTree, b: LogicTree) -> LogicTree:
    return LogicTree(op=OR, left=a, right=b)


# ---------------------------------------------------------------------------
# canonical keys


class CanonicalKey(NamedTuple):
    """Truth-table identity of a tree.

    ``leaves`` is the sorted tuple of covariate indices the Boolean function
    actually depends on; ``table`` holds the function's truth table as an
    integer where bit i is the value under the assignment in which leaf r
    takes the value ``(i >> r) & 1``.
    """

    leaves: tuple[int, ...]
    table: int

    @property
    def is_constant(self) -> bool:
        """True for tautologies/contradictions (no effective leaves)."""
        return not self.leaves

    def complement(self) -> "CanonicalKey":
        mask = (1 << (1 << len(self.leaves))) - 1
        return CanonicalKey(self.leaves, self.table ^ mask)

    def modulo_complement(self) -> "CanonicalKey":
        """Representative shared by a function and its complement.

        A tree and its complement induce the same regression model (the
        design column is an affine flip absorbed by the intercept), so model
        bookkeeping identifies the pair through this representative.
        """
        other = self.complement()
        return self if self.table <= other.table else other


def _eval_on_assignments(tree: LogicTree, cols: dict[int, np.ndarray]) -> np.ndarray:
    if tree.is_leaf:
        v = cols[tree.index]
    elif tree.op == AND:
        v = _eval_on_assignments(tree.left, cols) & _eval_on_assignments(tree.right, cols)
    else:
        v = _eval_on_assignments(tree.left, cols) | _eval_on_assignments(tree.right, cols)
    return (1 - v).astype(np.uint8) if tree.neg else v


def _table_int(values: np.ndarray) -> int:
    out = 0
    for i in np.nonzero(values)[0]:
        out |= 1 << int(i)
    return out


def canonical_key(tree: LogicTree) -> CanonicalKey:
    """Exact truth-table key over the tree's effective leaves.

    Leaves that do not affect the Boolean function (absorption and friends)
    are pruned from the key's leaf set.  Limited to MAX_KEY_LEAVES distinct
    leaves; beyond that a KeyCapacityError is raised.
    """
    leaves = sorted(tree.leaf_set())
    if len(leaves) > MAX_KEY_LEAVES:
        raise KeyCapacityError(
            f"{len(leaves)} distinct leaves exceed the {MAX_KEY_LEAVES}-leaf key limit")
    k = len(leaves)
    idx = np.arange(1 << k)
    cols = {j: ((idx >> r) & 1).astype(np.uint8) for r, j in enumerate(leaves)}
    vals = _eval_on_assignments(tree, cols)

    # drop leaves the function does not depend on, one at a time
    changed = True
    while changed and leaves:
        changed = False
        for r in range(len(leaves)):
            lo = (idx >> r) & 1 == 0
            hi = idx[lo] | (1 << r)
            if np.array_equal(vals[idx[lo]], vals[hi]):
                vals = vals[idx[lo]]
                leaves.pop(r)
                k -= 1
                idx = np.arange(1 << k)
                changed = True
                break
    return CanonicalKey(tuple(leaves), _table_int(vals))


# ---------------------------------------------------------------------------
# genetic operators


@dataclass(frozen=True)
class GaOperatorParams:
    """Probabilities steering crossover, mutation and reduction."""

    p_and: float = 0.9
    p_not: float = 0.1
    rho_del: float = 0.5
    c_max: int = 5

    def __post_init__(self):
        for name in ("p_and", "p_not", "rho_del"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0,1], got {v}")
        if self.c_max < 1:
            raise ValueError("c_max must be >= 1")


def _join(a: LogicTree, b: LogicTree, params: GaOperatorParams, rng) -> LogicTree:
    # draw order: negate first argument, negate second, then the operator
    if rng.random() < params.p_not:
        a = a.negate()
    if rng.random() < params.p_not:
        b = b.negate()
    op = AND if rng.random() < params.p_and else OR
    return LogicTree(op=op, left=a, right=b)


def crossover(parent1: LogicTree, parent2: LogicTree,
              params: GaOperatorParams, rng) -> LogicTree:
    """Join two parents, each independently negated with probability p_not."""
    return _join(parent1, parent2, params, rng)


def mutate(parent: LogicTree, new_leaf: LogicTree, params: GaOperatorParams,
           rng, founders: frozenset[int] = frozenset()) -> LogicTree:
    """Join a parent with a fresh single leaf drawn from outside the founders."""
    if not new_leaf.is_leaf:
        raise TreeError("mutation partner must be a single leaf")
    if new_leaf.index in founders:
        raise TreeError(
            f"mutation leaf X{new_leaf.index + 1} belongs to the protected founder set")
    return _join(parent, new_leaf, params, rng)


def reduce_tree(tree: LogicTree, params: GaOperatorParams, rng) -> LogicTree:
    """Delete each leaf with probability rho_del and prune the tree.

    A deleted leaf takes its adjacent operator with it: a binary node with one
    surviving child collapses to that child.  If every leaf is marked the
    survivor is a single uniformly chosen leaf.
    """
    n = tree.size
    if n < 2:
        raise TreeError("reduction requires a tree with at least 2 leaves")
    marks = [rng.random() < params.rho_del for _ in range(n)]
    if all(marks):
        marks[int(rng.integers(n))] = False

    counter = itertools.count()

    def prune(node: LogicTree) -> LogicTree | None:
        if node.is_leaf:
            return None if marks[next(counter)] else node
        lt = prune(node.left)
        rt = prune(node.right)
        if lt is None and rt is None:
            return None
        if lt is None:
            return rt
        if rt is None:
            return lt
        return LogicTree(op=node.op, left=lt, right=rt, neg=node.neg)

    out = prune(tree)
    assert out is not None
    return out


# ---------------------------------------------------------------------------
# textual round-trip syntax: leaves X1.. (1-based), !, &, |, parentheses


def format_tree(tree: LogicTree) -> str:
    if tree.is_leaf:
        s = f"X{tree.index + 1}"
        return f"!{s}" if tree.neg else s

    def wrap(child: LogicTree) -> str:
        s = format_tree(child)
        return f"({s})" if (not child.is_leaf and not child.neg) else s

    body = f"{wrap(tree.left)} {tree.op} {wrap(tree.right)}"
    return f"!({body})" if tree.neg else body


def _tokenize(text: str) -> Iterator[str]:
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()!&|":
            yield ch
            i += 1
        elif ch in "Xx":
            j = i + 1
            while j < len(text) and text[j].isdigit():
                j += 1
            if j == i + 1:
                raise TreeError(f"expected leaf number at position {i}")
            yield text[i:j]
            i = j
        else:
            raise TreeError(f"unexpected character {ch!r} at position {i}")


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise TreeError(f"expected {expected or 'a token'}, got {tok!r}")
        self.pos += 1
        return tok

    def expr(self) -> LogicTree:
        node = self.term()
        while self.peek() == OR:
            self.take(OR)
            node = LogicTree(op=OR, left=node, right=self.term())
        return node

    def term(self) -> LogicTree:
        node = self.factor()
        while self.peek() == AND:
            self.take(AND)
            node = LogicTree(op=AND, left=node, right=self.factor())
        return node

    def factor(self) -> LogicTree:
        tok = self.peek()
        if tok == "!":
            self.take("!")
            return self.factor().negate()
        if tok == "(":
            self.take("(")
            node = self.expr()
            self.take(")")
            return node
        tok = self.take()
        if not tok or tok[0] not in "Xx":
            raise TreeError(f"expected a leaf, got {tok!r}")
        index = int(tok[1:]) - 1
        if index < 0:
            raise TreeError("leaf numbering is 1-based")
        return leaf(index)


def parse_tree(text: str) -> LogicTree:
    """Parse the textual syntax, e.g. ``!(X1 & X4) | X8``."""
    p = _Parser(text)
    node = p.expr()
    if p.peek() is not None:
        raise TreeError(f"trailing input at token {p.pos}: {p.peek()!r}")
    return node
