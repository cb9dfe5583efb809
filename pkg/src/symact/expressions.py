"""Expression trees shared by the evolutionary search and the network layer.

A tree is either a genome (leaves are feature references ``X0``, ``X12``, ...)
or a scalar activation (leaves are the single variable ``x``).  The module
covers the whole lifecycle: parsing the canonical prefix notation, printing it
back, vectorized evaluation, symbolic differentiation, simplification, and the
rewrite that turns a feature-indexed genome into a single-variable activation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

# Function set available to evolved genomes: name -> arity.
GP_OPERATORS = {"add": 2, "sub": 2, "mul": 2, "sin": 1, "cos": 1, "abs": 1}

# "sign" appears only in derivatives of abs.  It evaluates and prints like any
# other operator but is never sampled by the search.
OPERATOR_ARITY = dict(GP_OPERATORS, sign=1)

# Hard structural caps; bloat guards in the search enforce the same limits.
DEFAULT_MAX_NODES = 64
DEFAULT_MAX_DEPTH = 17


class FormulaError(ValueError):
    """Base class for all formula-related errors."""


class ParseError(FormulaError):
    """Malformed prefix-notation text; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownOperatorError(ParseError):
    """Operator name outside the supported function set."""


class FormulaValidationError(FormulaError):
    """Structurally valid tree used in a context it is not allowed in."""


@dataclass(frozen=True)
class Feature:
    """Leaf referencing input column ``index`` (printed ``X<index>``)."""

    index: int


@dataclass(frozen=True)
class Var:
    """The scalar activation variable (printed ``x``)."""


@dataclass(frozen=True)
class Const:
    """Numeric constant; arises only from simplification and derivatives."""

    value: float


@dataclass(frozen=True)
class Call:
    op: str
    args: tuple

    def __post_init__(self):
        arity = OPERATOR_ARITY.get(self.op)
        if arity is None:
            raise FormulaError(f"unsupported operator {self.op!r}")
        if len(self.args) != arity:
            raise FormulaError(
                f"{self.op} expects {arity} argument(s), got {len(self.args)}"
            )


Node = Union[Feature, Var, Const, Call]
VAR = Var()


def _walk(node: Node) -> Iterator[Node]:
    """Preorder traversal."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, Call):
            stack.extend(reversed(n.args))


def _depth(node: Node) -> int:
    if isinstance(node, Call):
        return 1 + max(_depth(a) for a in node.args)
    return 1


class Formula:
    """Immutable expression tree plus cached structural facts.

    ``node_count`` counts every reachable node, ``depth`` counts nodes on the
    longest root-to-leaf path (a lone leaf has depth 1).  Trees exceeding the
    size caps are rejected at construction.
    """

    __slots__ = ("root", "node_count", "depth", "used_features", "has_variable")

    def __init__(self, root: Node, max_nodes: int = DEFAULT_MAX_NODES,
                 max_depth: int = DEFAULT_MAX_DEPTH):
        count = 0
        features = set()
        has_var = False
        for n in _walk(root):
            count += 1
            if isinstance(n, Feature):
                if n.index < 0:
                    raise FormulaValidationError(f"negative feature index {n.index}")
                features.add(n.index)
            elif isinstance(n, Var):
                has_var = True
        if count > max_nodes:
            raise FormulaValidationError(
                f"tree has {count} nodes, maximum is {max_nodes}")
        depth = _depth(root)
        if depth > max_depth:
            raise FormulaValidationError(
                f"tree has depth {depth}, maximum is {max_depth}")
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "node_count", count)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "used_features", frozenset(features))
        object.__setattr__(self, "has_variable", has_var)

    def __setattr__(self, name, value):
        raise AttributeError("Formula is immutable")

    def __eq__(self, other):
        if not isinstance(other, Formula):
            return NotImplemented
        return self.root == other.root

    def __hash__(self):
        return hash(self.root)

    def __str__(self):
        return print_formula(self)

    def __repr__(self):
        return f"Formula({print_formula(self)!r})"


_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"-?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expect(self, ch: str):
        if self._peek() != ch:
            raise ParseError(f"expected {ch!r}", self.pos)
        self.pos += 1

    def parse(self) -> Node:
        node = self._expr()
        self._skip_ws()
        if self.pos != len(self.text):
            raise ParseError("unexpected trailing input", self.pos)
        return node

    def _expr(self) -> Node:
        self._skip_ws()
        if self.pos >= len(self.text):
            raise ParseError("unexpected end of input", self.pos)
        name = _NAME_RE.match(self.text, self.pos)
        if name:
            return self._named(name.group(), name.start())
        number = _NUMBER_RE.match(self.text, self.pos)
        if number:
            self.pos = number.end()
            return Const(float(number.group()))
        raise ParseError(
            f"expected operator, leaf, or number, found {self.text[self.pos]!r}",
            self.pos)

    def _named(self, name: str, start: int) -> Node:
        self.pos = start + len(name)
        if name == "x":
            return VAR
        if name[0] == "X" and name[1:].isdigit():
            return Feature(int(name[1:]))
        if name in OPERATOR_ARITY:
            self._expect("(")
            args = [self._expr()]
            for _ in range(OPERATOR_ARITY[name] - 1):
                self._expect(",")
                args.append(self._expr())
            self._expect(")")
            return Call(name, tuple(args))
        if self._peek() == "(":
            raise UnknownOperatorError(f"unknown operator {name!r}", start)
        raise ParseError(f"invalid leaf {name!r}", start)


def parse_formula(text: str, max_nodes: int = DEFAULT_MAX_NODES,
                  max_depth: int = DEFAULT_MAX_DEPTH) -> Formula:
    """Parse prefix notation like ``mul(cos(X25), sub(X12, X3))``.

    Whitespace-insensitive.  Raises :class:`ParseError` (with byte offset) on
    malformed syntax, :class:`UnknownOperatorError` for unsupported operator
    names, and :class:`FormulaValidationError` when the tree mixes ``x`` with
    feature leaves or breaks the size caps.
    """
    root = _Parser(text).parse()
    formula = Formula(root, max_nodes=max_nodes, max_depth=max_depth)
    if formula.has_variable and formula.used_features:
        raise FormulaValidationError(
            "tree mixes the variable leaf x with feature leaves")
    return formula


def _format_const(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(float(value))


def _print(node: Node) -> str:
    if isinstance(node, Feature):
        return f"X{node.index}"
    if isinstance(node, Var):
        return "x"
    if isinstance(node, Const):
        return _format_const(node.value)
    return f"{node.op}({', '.join(_print(a) for a in node.args)})"


def print_formula(formula: Formula) -> str:
    """Canonical text: lowercase operators, ``", "`` separators, no padding."""
    return _print(formula.root)


def _apply_op(op: str, *args):
    if op == "add":
        return args[0] + args[1]
    if op == "sub":
        return args[0] - args[1]
    if op == "mul":
        return args[0] * args[1]
    if op == "sin":
        return np.sin(args[0])
    if op == "cos":
        return np.cos(args[0])
    if op == "abs":
        return np.abs(args[0])
    if op == "sign":
        return np.sign(args[0])
    raise FormulaError(f"unsupported operator {op!r}")


def _eval(node: Node, X, x):
    if isinstance(node, Feature):
        return X[:, node.index]
    if isinstance(node, Var):
        return x
    if isinstance(node, Const):
        return node.value
    return _apply_op(node.op, *(_eval(a, X, x) for a in node.args))


def eval_batch(formula: Formula, X) -> np.ndarray:
    """Evaluate a feature-indexed formula on every row of ``X``.

    All operators are total, so finite inputs yield finite outputs except for
    float overflow in long multiplication chains.
    """
    if formula.has_variable:
        raise FormulaValidationError(
            "batch evaluation requires a feature-indexed formula without x")
    X = np.asarray(X)
    if X.ndim != 2:
        raise FormulaError(f"expected a 2-d matrix, got shape {X.shape}")
    for index in sorted(formula.used_features):
        if index >= X.shape[1]:
            raise FormulaError(
                f"feature index X{index} out of range for {X.shape[1]} features")
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.asarray(_eval(formula.root, X, None))
    if out.ndim == 0:
        return np.full(X.shape[0], float(out))
    return out.copy() if out.base is not None else out


def eval_scalar(formula: Formula, x):
    """Evaluate a variable-only formula at ``x`` (scalar or array)."""
    if formula.used_features:
        raise FormulaValidationError(
            "scalar evaluation requires a variable-only formula, found "
            + ", ".join(f"X{i}" for i in sorted(formula.used_features)))
    x = np.asarray(x)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.asarray(_eval(formula.root, None, x))
    if x.ndim == 0:
        return float(out)
    if out.shape != x.shape:
        return np.broadcast_to(out, x.shape).copy()
    return out.copy() if (out is x or out.base is not None) else out


def _is_zero(node: Node) -> bool:
    return isinstance(node, Const) and node.value == 0.0


def _is_one(node: Node) -> bool:
    return isinstance(node, Const) and node.value == 1.0


def _local_rules(node: Call) -> Node:
    args = node.args
    if all(isinstance(a, Const) for a in args):
        return Const(float(_apply_op(node.op, *(a.value for a in args))))
    if node.op == "sub" and args[0] == args[1]:
        return Const(0.0)
    if node.op == "mul" and (_is_zero(args[0]) or _is_zero(args[1])):
        return Const(0.0)
    if node.op == "add":
        if _is_zero(args[0]):
            return args[1]
        if _is_zero(args[1]):
            return args[0]
    if node.op == "sub" and _is_zero(args[1]):
        return args[0]
    if node.op == "mul":
        if _is_one(args[0]):
            return args[1]
        if _is_one(args[1]):
            return args[0]
    if node.op == "abs" and isinstance(args[0], Call) and args[0].op == "abs":
        return args[0]
    return node


def _simplify_node(node: Node) -> Node:
    if not isinstance(node, Call):
        return node
    simplified = Call(node.op, tuple(_simplify_node(a) for a in node.args))
    while True:
        rewritten = _local_rules(simplified)
        if rewritten == simplified or not isinstance(rewritten, Call):
            return rewritten
        simplified = rewritten


def simplify(formula: Formula) -> Formula:
    """Apply local rewrites to fixpoint; evaluation semantics are preserved."""
    return Formula(_simplify_node(formula.root))


def _neg_wrap(sign: int, node: Node) -> Node:
    if sign >= 0:
        return node
    if isinstance(node, Const):
        return Const(-node.value)
    return Call("sub", (Const(0.0), node))


def _signed_add(s1: int, e1: Node, s2: int, e2: Node) -> tuple[int, Node]:
    if s1 >= 0 and s2 >= 0:
        return 1, Call("add", (e1, e2))
    if s1 >= 0 and s2 < 0:
        return 1, Call("sub", (e1, e2))
    if s1 < 0 and s2 >= 0:
        return 1, Call("sub", (e2, e1))
    return -1, Call("add", (e1, e2))


def _diff(node: Node) -> tuple[int, Node]:
    """Derivative as a (sign, expression) pair so negation stays sub-based."""
    if isinstance(node, Var):
        return 1, Const(1.0)
    if isinstance(node, Const):
        return 1, Const(0.0)
    if isinstance(node, Feature):
        raise FormulaValidationError("cannot differentiate a feature leaf")
    u = node.args[0]
    su, du = _diff(u)
    if node.op == "add":
        sv, dv = _diff(node.args[1])
        return _signed_add(su, du, sv, dv)
    if node.op == "sub":
        sv, dv = _diff(node.args[1])
        return _signed_add(su, du, -sv, dv)
    if node.op == "mul":
        v = node.args[1]
        sv, dv = _diff(v)
        return _signed_add(su, Call("mul", (du, v)), sv, Call("mul", (u, dv)))
    if node.op == "sin":
        return su, Call("mul", (Call("cos", (u,)), du))
    if node.op == "cos":
        return -su, Call("mul", (Call("sin", (u,)), du))
    if node.op == "abs":
        return su, Call("mul", (Call("sign", (u,)), du))
    if node.op == "sign":
        return 1, Const(0.0)
    raise FormulaError(f"unsupported operator {node.op!r}")


def differentiate(formula: Formula) -> Formula:
    """Symbolic d/dx of a variable-only formula, simplified.

    ``abs`` differentiates to ``sign`` with the subgradient convention
    sign(0) = 0.
    """
    if formula.used_features:
        raise FormulaValidationError(
            "differentiation requires a variable-only formula")
    sign, node = _diff(formula.root)
    return Formula(_simplify_node(_neg_wrap(sign, node)))


def _collapse_leaf_pairs(node: Node) -> tuple[Node, bool]:
    if not isinstance(node, Call):
        return node, False
    if node.op in ("add", "sub"):
        left, right = node.args
        if (isinstance(left, Feature) and isinstance(right, Feature)
                and left.index != right.index):
            return VAR, True
    fired = False
    args = []
    for a in node.args:
        new, f = _collapse_leaf_pairs(a)
        args.append(new)
        fired |= f
    return Call(node.op, tuple(args)), fired


def _substitute_features(node: Node) -> Node:
    if isinstance(node, Feature):
        return VAR
    if isinstance(node, Call):
        return Call(node.op, tuple(_substitute_features(a) for a in node.args))
    return node


def generalize_with_flag(formula: Formula) -> tuple[Formula, bool]:
    """Like :func:`generalize` but also reports whether the pair-collapse
    rewrite fired (an add/sub of two distinct bare feature leaves becoming a
    single ``x``)."""
    collapsed, fired = _collapse_leaf_pairs(formula.root)
    substituted = _substitute_features(collapsed)
    return Formula(_simplify_node(substituted)), fired


def generalize(formula: Formula) -> Formula:
    """Rewrite a feature-indexed genome into a single-variable activation.

    First an add/sub whose two children are bare feature leaves with distinct
    indices collapses to ``x`` (so a difference of two independent features
    becomes the identity rather than the degenerate ``sub(x, x) = 0``), then
    every remaining feature leaf becomes ``x``, then the result is simplified.
    """
    return generalize_with_flag(formula)[0]
