"""Arithmetic expressions for model configs.

Grammar: numeric literals, variables ``x1..xn``, ``u1..um``, ``y1..yp``, the
binary operators ``+ - * / ^`` (``^`` is exponentiation), unary minus, and the
functions ``exp``, ``ln``, ``sin``, ``cos``.  Expressions are parsed once with
:mod:`ast` into a tree of closures that evaluate elementwise on numpy arrays,
so a compiled expression is reentrant and works on batches.
"""

from __future__ import annotations

import ast
import re

import numpy as np

FUNCTIONS = {"exp": np.exp, "ln": np.log, "sin": np.sin, "cos": np.cos}

_VAR = re.compile(r"^([xuy])([1-9][0-9]*)$")

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class ExpressionError(ValueError):
    pass


class Expression:
    """A compiled expression.

    Call with keyword arrays ``x``, ``u``, ``y`` whose last axis indexes the
    variable (``x1`` is ``x[..., 0]``).
    """

    def __init__(self, source: str, allowed: str = "xuy", dims: dict | None = None):
        self.source = source
        self.variables: set[tuple[str, int]] = set()
        try:
            tree = ast.parse(source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self._fn = self._compile(tree.body, allowed, dims or {})

    def _compile(self, node, allowed, dims):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            value = float(node.value)
            return lambda env: value
        if isinstance(node, ast.Name):
            m = _VAR.match(node.id)
            if m is None:
                raise ExpressionError(f"unknown name {node.id!r} in {self.source!r}")
            kind, idx = m.group(1), int(m.group(2)) - 1
            if kind not in allowed:
                raise ExpressionError(
                    f"variable {node.id!r} not allowed in {self.source!r} "
                    f"(allowed: {', '.join(allowed)})")
            if kind in dims and idx >= dims[kind]:
                raise ExpressionError(
                    f"variable {node.id!r} exceeds dimension {dims[kind]} in {self.source!r}")
            self.variables.add((kind, idx))
            return lambda env: env[kind][..., idx]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = self._compile(node.operand, allowed, dims)
            if isinstance(node.op, ast.USub):
                return lambda env: np.negative(inner(env))
            return inner
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op = _BINOPS[type(node.op)]
            left = self._compile(node.left, allowed, dims)
            right = self._compile(node.right, allowed, dims)
            return lambda env: op(left(env), right(env))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            fn = FUNCTIONS.get(node.func.id)
            if fn is None:
                raise ExpressionError(f"unknown function {node.func.id!r} in {self.source!r}")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{node.func.id} takes one argument in {self.source!r}")
            arg = self._compile(node.args[0], allowed, dims)
            return lambda env: fn(arg(env))
        raise ExpressionError(f"unsupported syntax {ast.dump(node)[:40]}... in {self.source!r}")

    def __call__(self, x=None, u=None, y=None):
        env = {"x": x, "u": u, "y": y}
        shape = ()
        for arr in env.values():
            if arr is not None:
                shape = np.broadcast_shapes(shape, np.shape(arr)[:-1])
        with np.errstate(all="ignore"):
            out = np.asarray(self._fn(env), dtype=float)
        if out.shape != shape:
            out = np.broadcast_to(out, shape).copy()
        return out

    def __repr__(self):
        return f"Expression({self.source!r})"


def compile_vector(sources, allowed="xuy", dims=None):
    """Compile a list of expressions into a function returning ``(..., k)``."""
    exprs = [Expression(s, allowed, dims) for s in sources]

    def fn(x=None, u=None, y=None):
        return np.stack([e(x=x, u=u, y=y) for e in exprs], axis=-1)

    fn.expressions = exprs
    return fn
