"""Arithmetic expressions over ``t`` and ``x_1..x_d`` for config-defined coefficients.

Grammar is Python's expression syntax restricted to numbers, the variables,
``pi``/``e``, the operators ``+ - * / ^`` (``**`` also accepted) and the
functions sin, cos, exp (plus tan, sqrt, log, abs). Evaluation is vectorised
with numpy.
"""
from __future__ import annotations

import ast
import math
import operator

import numpy as np


class ExpressionError(ValueError):
    pass


FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp,
    "tan": np.tan, "sqrt": np.sqrt, "log": np.log, "abs": np.abs,
}
CONSTANTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def _compile(node, names):
    if isinstance(node, ast.Expression):
        return _compile(node.body, names)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        v = float(node.value)
        return lambda env: v
    if isinstance(node, ast.Name):
        if node.id in names:
            key = node.id
            return lambda env: env[key]
        if node.id in CONSTANTS:
            v = CONSTANTS[node.id]
            return lambda env: v
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        lhs, rhs = _compile(node.left, names), _compile(node.right, names)
        return lambda env: op(lhs(env), rhs(env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        op = _UNARY[type(node.op)]
        arg = _compile(node.operand, names)
        return lambda env: op(arg(env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id in FUNCTIONS and len(node.args) == 1 and not node.keywords:
        fn = FUNCTIONS[node.func.id]
        arg = _compile(node.args[0], names)
        return lambda env: fn(arg(env))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


class Expression:
    """A parsed expression; call with keyword values for its variables."""

    def __init__(self, source, variables=("t",)):
        if isinstance(source, (int, float)):
            source = repr(float(source))
        if not isinstance(source, str) or not source.strip():
            raise ExpressionError(f"expression must be a non-empty string, got {source!r}")
        self.source = source
        self.variables = tuple(variables)
        try:
            tree = ast.parse(source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self._fn = _compile(tree, set(self.variables))

    def __call__(self, **env):
        missing = set(self.variables) - env.keys()
        if missing:
            raise ExpressionError(f"missing variables {sorted(missing)}")
        with np.errstate(all="ignore"):
            return self._fn(env)

    def __repr__(self):
        return f"Expression({self.source!r})"


def state_variables(d):
    names = [f"x_{i + 1}" for i in range(d)]
    return ("t", "x", *names) if d == 1 else ("t", *names)


def time_function(source):
    """Compile an expression in ``t`` to a numpy-friendly ``f(t)``."""
    expr = Expression(source, ("t",))

    def fn(t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(expr(t=t), t.shape) * 1.0

    fn.source = expr.source
    return fn


def state_function(source, d):
    """Compile an expression in ``t, x_1..x_d`` to ``f(t, X) -> (n,)`` for X of shape (n, d)."""
    expr = Expression(source, state_variables(d))

    def fn(t, X):
        env = {"t": t}
        for i in range(d):
            env[f"x_{i + 1}"] = X[:, i]
        if d == 1:
            env["x"] = X[:, 0]
        return np.broadcast_to(expr(**env), (X.shape[0],)) * 1.0

    fn.source = expr.source
    return fn
