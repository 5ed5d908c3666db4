"""Tiny arithmetic expression language for exponent fields, weights and test functions.

Expressions are written in Python-like infix syntax and compiled to
vectorized numpy callables::

    >>> f = compile_expr("2 + x")
    >>> f(np.array([0.0, 0.5]))
    array([2. , 2.5])

Supported: numbers, ``pi``, ``e``, the coordinates ``x`` and ``y`` (and
``s`` where a second argument is allowed), ``+ - * / ^ **``, comparisons
(yielding 0/1), ``and``/``or``/``not``, ``a if cond else b`` and the
functions ``exp log sqrt abs min max sin cos where ind``.
"""

from __future__ import annotations

import ast
from typing import Callable

import numpy as np

from .errors import ExpressionError

__all__ = ["Expression", "compile_expr", "split_coords"]

_FUNCS: dict[str, Callable] = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sin": np.sin,
    "cos": np.cos,
    "min": np.minimum,
    "max": np.maximum,
    "where": lambda c, a, b: np.where(np.asarray(c) != 0, a, b),
    "ind": lambda c: (np.asarray(c) != 0).astype(float),
}
_CONSTS = {"pi": np.pi, "e": np.e}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.true_divide,
    ast.Pow: np.power,
}
_CMPOPS = {
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
    ast.Eq: np.equal,
    ast.NotEq: np.not_equal,
}


def split_coords(points) -> dict[str, np.ndarray]:
    """Map a point array to coordinate variables.

    1-d input (or a scalar) is a list of 1-D coordinates; 2-d input of
    shape ``(n, d)`` holds one point per row.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim <= 1:
        return {"x": pts}
    names = ("x", "y", "z")
    return {names[i]: pts[:, i] for i in range(pts.shape[1])}


class Expression:
    """A compiled expression; call it with points (and ``s`` if declared)."""

    def __init__(self, source: str, variables: tuple[str, ...] = ("x", "y")):
        self.source = str(source)
        self.variables = variables
        text = self.source.replace("^", "**")
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(
                f"cannot parse expression {self.source!r}: {exc.msg} "
                f"(column {exc.offset})"
            ) from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError(f"unsupported constant {node.value!r}")
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in _CONSTS:
                raise ExpressionError(
                    f"unknown name {node.id!r} in {self.source!r}"
                )
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"unsupported operator in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd, ast.Not)):
                raise ExpressionError(f"unsupported operator in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Compare):
            for op in node.ops:
                if type(op) not in _CMPOPS:
                    raise ExpressionError(f"unsupported comparison in {self.source!r}")
            self._check(node.left)
            for c in node.comparators:
                self._check(c)
        elif isinstance(node, ast.BoolOp):
            for v in node.values:
                self._check(v)
        elif isinstance(node, ast.IfExp):
            self._check(node.test)
            self._check(node.body)
            self._check(node.orelse)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError(f"unknown function in {self.source!r}")
            if node.keywords:
                raise ExpressionError("keyword arguments are not supported")
            for a in node.args:
                self._check(a)
        else:
            raise ExpressionError(
                f"unsupported syntax {type(node).__name__} in {self.source!r}"
            )

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ExpressionError(f"variable {node.id!r} is not available here")
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            if isinstance(node.op, ast.USub):
                return np.negative(v)
            if isinstance(node.op, ast.Not):
                return (np.asarray(v) == 0).astype(float)
            return v
        if isinstance(node, ast.Compare):
            left = self._eval(node.left, env)
            out = None
            for op, comp in zip(node.ops, node.comparators):
                right = self._eval(comp, env)
                r = _CMPOPS[type(op)](left, right)
                out = r if out is None else np.logical_and(out, r)
                left = right
            return np.asarray(out, dtype=float)
        if isinstance(node, ast.BoolOp):
            vals = [np.asarray(self._eval(v, env)) != 0 for v in node.values]
            combine = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
            out = vals[0]
            for v in vals[1:]:
                out = combine(out, v)
            return np.asarray(out, dtype=float)
        if isinstance(node, ast.IfExp):
            cond = np.asarray(self._eval(node.test, env)) != 0
            return np.where(cond, self._eval(node.body, env), self._eval(node.orelse, env))
        if isinstance(node, ast.Call):
            args = [self._eval(a, env) for a in node.args]
            return _FUNCS[node.func.id](*args)
        raise ExpressionError("unreachable")  # pragma: no cover

    def __call__(self, points, s=None) -> np.ndarray:
        env = split_coords(points)
        if s is not None:
            env["s"] = np.asarray(s, dtype=float)
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, env)
        shape = np.broadcast_shapes(*(np.shape(v) for v in env.values()))
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    @property
    def is_constant(self) -> bool:
        return not any(isinstance(n, ast.Name) and n.id in self.variables
                       for n in ast.walk(self._tree))

    def __repr__(self):
        return f"Expression({self.source!r})"


def compile_expr(source, variables: tuple[str, ...] = ("x", "y")) -> Expression:
    if isinstance(source, Expression):
        return source
    if isinstance(source, (int, float)):
        source = repr(float(source))
    return Expression(source, variables)
