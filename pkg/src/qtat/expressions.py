"""Tiny closed-form expression grammar for coefficient and truth fields.

Supported: ``+ - * / ^`` (also ``**``), ``sin``, ``cos``, ``exp``, numeric
constants, ``pi``, ``e``, and the space variables ``x1 .. xn``.  Expressions
are compiled through a whitelisted ``ast`` walk and evaluate vectorized over
numpy arrays.
"""

from __future__ import annotations

import ast

import numpy as np

from .errors import ConfigError

_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_UNARYOPS = {ast.UAdd: lambda v: v, ast.USub: np.negative}


class Expression:
    """A compiled scalar expression in the variables x1..xn."""

    def __init__(self, source: str, ndim: int):
        self.source = source
        self.ndim = ndim
        try:
            tree = ast.parse(source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {source!r}: {exc.msg}") from exc
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNARYOPS:
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ConfigError(f"unknown function in expression {self.source!r}")
            if len(node.args) != 1 or node.keywords:
                raise ConfigError(f"functions take one argument in {self.source!r}")
            self._check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id in _CONSTANTS:
                return
            if not _is_variable(node.id, self.ndim):
                raise ConfigError(
                    f"unknown name {node.id!r} in expression {self.source!r} "
                    f"(expected x1..x{self.ndim})"
                )
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ConfigError(f"non-numeric constant in {self.source!r}")
        else:
            raise ConfigError(f"unsupported syntax in expression {self.source!r}")

    def __call__(self, points):
        """Evaluate on an array of points with shape (..., ndim)."""
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.ndim:
            raise ValueError(f"expected points with last axis {self.ndim}")
        env = {f"x{i + 1}": points[..., i] for i in range(self.ndim)}
        return np.broadcast_to(self._eval(self._tree, env), points.shape[:-1]).copy()

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARYOPS[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Call):
            return _FUNCTIONS[node.func.id](self._eval(node.args[0], env))
        if isinstance(node, ast.Name):
            if node.id in _CONSTANTS:
                return _CONSTANTS[node.id]
            return env[node.id]
        return float(node.value)


def _is_variable(name: str, ndim: int) -> bool:
    if not name.startswith("x"):
        return False
    try:
        k = int(name[1:])
    except ValueError:
        return False
    return 1 <= k <= ndim


def parse_expression(source, ndim: int):
    """Compile ``source`` into a vectorized callable; numbers pass through as constants."""
    if isinstance(source, (int, float)):
        value = float(source)
        return lambda points: np.full(np.asarray(points).shape[:-1], value)
    return Expression(str(source), ndim)
