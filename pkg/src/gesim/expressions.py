"""Arithmetic expression trees over feature columns, with protected operators.

The surface syntax is the one the bundled grammars emit: infix ``+ - *``
with Python precedence and left associativity, calls ``pdiv(a,b)``,
``psqrt(a)``, ``plog(a)``, ``np.sin(a)``, ``np.tanh(a)``, ``np.exp(a)``,
feature references ``x[:,k]`` (shorthand ``xk`` accepted), decimal
constants, and parentheses.  Emitted formula text is valid numpy code
given the protected helpers, so reports stay copy-paste runnable.

Protected semantics, applied element-wise during evaluation:

    pdiv(a, b)  = 1.0 where |b| <= 1e-9, else a / b
    psqrt(a)    = sqrt(|a|)
    plog(a)     = log(1 + |a|)
    np.exp(a)   saturates at a = 700 and marks the result non-finite

Exp saturation keeps the value finite but clears ``finite_flag`` on the
prediction, which downstream fitness treats as an invalid individual.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._core import (
    OP_ADD,
    OP_CONST,
    OP_EXP,
    OP_FEATURE,
    OP_MUL,
    OP_PDIV,
    OP_PLOG,
    OP_PSQRT,
    OP_SIN,
    OP_SUB,
    OP_TANH,
    eval_program,
)
from .grammar import DerivationTree, serialize


class MalformedExpression(ValueError):
    """Expression text outside the grammar surface syntax."""


_ARITY = {
    "add": 2,
    "sub": 2,
    "mul": 2,
    "pdiv": 2,
    "psqrt": 1,
    "plog": 1,
    "sin": 1,
    "tanh": 1,
    "exp": 1,
    "feature": 0,
    "const": 0,
}

_OPCODE = {
    "add": OP_ADD,
    "sub": OP_SUB,
    "mul": OP_MUL,
    "pdiv": OP_PDIV,
    "psqrt": OP_PSQRT,
    "plog": OP_PLOG,
    "sin": OP_SIN,
    "tanh": OP_TANH,
    "exp": OP_EXP,
}


class Program(NamedTuple):
    """Postfix form of an expression, ready for the evaluation kernel."""

    ops: np.ndarray
    args: np.ndarray
    consts: np.ndarray
    max_stack: int
    max_feature: int


@dataclass(frozen=True)
class ExpressionTree:
    """Immutable arithmetic AST node; ``node_count`` and ``depth`` cached."""

    kind: str
    children: tuple["ExpressionTree", ...] = ()
    value: float | None = None
    index: int | None = None
    node_count: int = field(init=False, compare=False)
    depth: int = field(init=False, compare=False)
    _program: Program | None = field(
        init=False, default=None, repr=False, compare=False
    )

    def __post_init__(self):
        arity = _ARITY.get(self.kind)
        if arity is None:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if len(self.children) != arity:
            raise ValueError(f"{self.kind} expects {arity} children, got {len(self.children)}")
        if self.kind == "feature" and (self.index is None or self.index < 0):
            raise ValueError("feature node needs a non-negative index")
        if self.kind == "const" and self.value is None:
            raise ValueError("const node needs a value")
        object.__setattr__(self, "node_count", 1 + sum(c.node_count for c in self.children))
        object.__setattr__(self, "depth", 1 + max((c.depth for c in self.children), default=0))

    def program(self) -> Program:
        if self._program is None:
            object.__setattr__(self, "_program", _build_program(self))
        return self._program


def feature(index: int) -> ExpressionTree:
    return ExpressionTree("feature", index=index)


def constant(value: float) -> ExpressionTree:
    return ExpressionTree("const", value=float(value))


@dataclass(frozen=True)
class PredictionVector:
    """Row-wise evaluation result; ``finite_flag`` is False when any value
    is non-finite or exp saturated anywhere in the computation."""

    values: np.ndarray
    finite_flag: bool


_TOKEN_RE = re.compile(
    r"""\s*(?:
      (?P<func>pdiv\(|psqrt\(|plog\(|np\.sin\(|np\.tanh\(|np\.exp\()
    | x\[\s*:\s*,\s*(?P<findex>\d+)\s*\]
    | x(?P<fshort>\d+)
    | (?P<number>\d+\.\d+|\d+)
    | (?P<op>[+\-*])
    | (?P<lparen>\()
    | (?P<rparen>\))
    | (?P<comma>,)
    )""",
    re.VERBOSE,
)

_FUNC_KIND = {
    "pdiv(": "pdiv",
    "psqrt(": "psqrt",
    "plog(": "plog",
    "np.sin(": "sin",
    "np.tanh(": "tanh",
    "np.exp(": "exp",
}


def _tokenize(text: str) -> list[tuple[str, object]]:
    tokens: list[tuple[str, object]] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None or match.end() == match.start():
            remainder = text[pos:].lstrip()
            if not remainder:
                break
            raise MalformedExpression(f"cannot tokenize {remainder[:20]!r} at offset {pos}")
        pos = match.end()
        if match.group("func"):
            tokens.append(("func", _FUNC_KIND[match.group("func")]))
        elif match.group("findex") is not None:
            tokens.append(("feature", int(match.group("findex"))))
        elif match.group("fshort") is not None:
            tokens.append(("feature", int(match.group("fshort"))))
        elif match.group("number"):
            tokens.append(("number", float(match.group("number"))))
        elif match.group("op"):
            tokens.append(("op", match.group("op")))
        elif match.group("lparen"):
            tokens.append(("lparen", "("))
        elif match.group("rparen"):
            tokens.append(("rparen", ")"))
        else:
            tokens.append(("comma", ","))
    return tokens


def parse_formula(text: str) -> ExpressionTree:
    """Parse expression text into an AST with Python operator precedence.

    The text form is authoritative for structure: ``a-b+c`` is
    ``(a-b)+c`` regardless of how a derivation happened to nest it.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise MalformedExpression("empty expression")
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else (None, None)

    def take(expected_kind: str):
        nonlocal pos
        kind, val = peek()
        if kind != expected_kind:
            raise MalformedExpression(f"expected {expected_kind}, found {val!r}")
        pos += 1
        return val

    def parse_sum():
        node = parse_product()
        while peek() == ("op", "+") or peek() == ("op", "-"):
            op = take("op")
            right = parse_product()
            node = ExpressionTree("add" if op == "+" else "sub", (node, right))
        return node

    def parse_product():
        node = parse_atom()
        while peek() == ("op", "*"):
            take("op")
            node = ExpressionTree("mul", (node, parse_atom()))
        return node

    def parse_atom():
        nonlocal pos
        kind, val = peek()
        pos += 1
        if kind == "func":
            first = parse_sum()
            if _ARITY[val] == 2:
                take("comma")
                second = parse_sum()
                take("rparen")
                return ExpressionTree(val, (first, second))
            take("rparen")
            return ExpressionTree(val, (first,))
        if kind == "feature":
            return ExpressionTree("feature", index=val)
        if kind == "number":
            return ExpressionTree("const", value=val)
        if kind == "lparen":
            node = parse_sum()
            take("rparen")
            return node
        raise MalformedExpression(f"unexpected token {val!r}")

    root = parse_sum()
    if pos != len(tokens):
        raise MalformedExpression(f"trailing tokens from {tokens[pos][1]!r}")
    return root


def compile_tree(tree: DerivationTree) -> ExpressionTree:
    """Bridge a complete derivation tree to an evaluable AST."""
    return parse_formula(serialize(tree))


_PRECEDENCE = {"add": 1, "sub": 1, "mul": 2}

_FUNC_TEXT = {
    "pdiv": "pdiv(",
    "psqrt": "psqrt(",
    "plog": "plog(",
    "sin": "np.sin(",
    "tanh": "np.tanh(",
    "exp": "np.exp(",
}

_INFIX = {"add": "+", "sub": "-", "mul": "*"}


def to_text(expr: ExpressionTree) -> str:
    """Emit surface text that reparses to the identical AST."""
    if expr.kind == "feature":
        return f"x[:,{expr.index}]"
    if expr.kind == "const":
        return repr(expr.value)
    if expr.kind in _INFIX:
        prec = _PRECEDENCE[expr.kind]
        left, right = expr.children
        left_text = to_text(left)
        if _PRECEDENCE.get(left.kind, 9) < prec:
            left_text = f"({left_text})"
        right_text = to_text(right)
        if _PRECEDENCE.get(right.kind, 9) <= prec:
            right_text = f"({right_text})"
        return f"{left_text}{_INFIX[expr.kind]}{right_text}"
    return f"{_FUNC_TEXT[expr.kind]}{','.join(to_text(c) for c in expr.children)})"


def _build_program(expr: ExpressionTree) -> Program:
    ops: list[int] = []
    args: list[int] = []
    consts: list[float] = []
    max_feature = -1
    depth = 0
    max_stack = 0

    # iterative post-order walk
    stack: list[tuple[ExpressionTree, bool]] = [(expr, False)]
    order: list[ExpressionTree] = []
    while stack:
        node, visited = stack.pop()
        if visited:
            order.append(node)
        else:
            stack.append((node, True))
            for child in reversed(node.children):
                stack.append((child, False))

    for node in order:
        if node.kind == "const":
            ops.append(OP_CONST)
            args.append(len(consts))
            consts.append(node.value)
            depth += 1
        elif node.kind == "feature":
            ops.append(OP_FEATURE)
            args.append(node.index)
            max_feature = max(max_feature, node.index)
            depth += 1
        else:
            ops.append(_OPCODE[node.kind])
            args.append(-1)
            depth -= _ARITY[node.kind] - 1
        max_stack = max(max_stack, depth)

    return Program(
        ops=np.asarray(ops, dtype=np.int32),
        args=np.asarray(args, dtype=np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        max_stack=max_stack,
        max_feature=max_feature,
    )


def evaluate(expr: ExpressionTree, features) -> PredictionVector:
    """Evaluate ``expr`` over a rows-by-features matrix, one value per row."""
    matrix = np.ascontiguousarray(features, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    program = expr.program()
    if program.max_feature >= matrix.shape[1]:
        raise ValueError(
            f"expression references x[:,{program.max_feature}] but the matrix "
            f"has {matrix.shape[1]} columns"
        )
    values, flags = eval_program(
        program.ops, program.args, program.consts, matrix, program.max_stack
    )
    return PredictionVector(values=values, finite_flag=flags == 0)


def node_count(expr: ExpressionTree) -> int:
    return expr.node_count


def depth(expr: ExpressionTree) -> int:
    return expr.depth
