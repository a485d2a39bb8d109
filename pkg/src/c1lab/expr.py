"""Small arithmetic expression evaluator for inline metric components.

Expressions use chart coordinate names, scenario parameters, ``pi`` and
``e``, the functions ``sqrt exp log sin cos tan sinh cosh tanh abs sign min
max``, the operators ``+ - * / **``, ``^`` as a synonym of ``**`` and
``|...|`` for absolute values, so ``|x|^1.5`` is accepted.  Evaluation is
vectorised with numpy.
"""

from __future__ import annotations

import ast
import operator
from typing import Callable, Dict, Sequence

import numpy as np

from .errors import InvalidInputError

__all__ = ["compile_expression", "normalize"]

_FUNCS: Dict[str, Callable] = {
    "sqrt": np.sqrt, "exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos,
    "tan": np.tan, "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh, "abs": np.abs,
    "sign": np.sign, "min": np.minimum, "max": np.maximum,
}
_CONSTS = {"pi": np.pi, "e": np.e}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: np.power}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def normalize(text: str) -> str:
    """Rewrite ``|a|`` as ``abs(a)`` and ``^`` as ``**``.

    Bars are matched like brackets: a bar opens an absolute value when it
    follows an operator, an opening bracket or the start of the text, and
    closes one otherwise.
    """
    out = []
    depth = 0
    prev = ""
    for ch in str(text):
        if ch == "|":
            if depth > 0 and prev not in ("", "(", ",", "+", "-", "*", "/", "^"):
                out.append(")")
                depth -= 1
                prev = ")"
            else:
                out.append("abs(")
                depth += 1
                prev = "("
            continue
        out.append(ch)
        if not ch.isspace():
            prev = ch
    if depth:
        raise InvalidInputError(f"unbalanced '|' in expression {text!r}")
    return "".join(out).replace("^", "**")


def compile_expression(text: str, names: Sequence[str], params: Dict[str, float] = None):
    """Compile ``text`` into ``f(x)`` where ``x[..., k]`` is the coordinate ``names[k]``."""
    params = dict(params or {})
    try:
        tree = ast.parse(normalize(text), mode="eval")
    except SyntaxError as exc:
        raise InvalidInputError(f"cannot parse expression {text!r}: {exc.msg}") from None
    index = {n: k for k, n in enumerate(names)}
    for node in ast.walk(tree):
        if isinstance(node, ast.Name):
            if node.id not in index and node.id not in params and node.id not in _CONSTS \
                    and node.id not in _FUNCS:
                raise InvalidInputError(f"unknown name {node.id!r} in expression {text!r}")
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise InvalidInputError(f"non-numeric constant in expression {text!r}")
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise InvalidInputError(f"unsupported call in expression {text!r}")
        elif not isinstance(node, (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Load,
                                   *_BINOPS, *_UNOPS)):
            raise InvalidInputError(f"unsupported syntax {type(node).__name__} in {text!r}")

    def ev(node, x):
        if isinstance(node, ast.Expression):
            return ev(node.body, x)
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in index:
                return x[..., index[node.id]]
            if node.id in params:
                return float(params[node.id])
            return _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, x), ev(node.right, x))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](ev(node.operand, x))
        return _FUNCS[node.func.id](*[ev(a, x) for a in node.args])

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(ev(tree, x), x.shape[:-1]).astype(float)

    return f
