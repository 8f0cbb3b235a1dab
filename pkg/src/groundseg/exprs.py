"""Tiny side-effect-free expression language.

Used for procedure step arguments/conditions and pipeline rule stages:
arithmetic / comparison / boolean logic over named variables plus a
``tm('tree.path')`` telemetry read.  Evaluation walks a whitelisted Python
AST; anything else is rejected at compile time.
"""

from __future__ import annotations

import ast
import math
import operator
from typing import Callable, Mapping, Optional

from .errors import ValidationError

_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.FloorDiv: operator.floordiv,
    ast.Mod: operator.mod, ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos, ast.Not: operator.not_}
_CMP = {
    ast.Lt: operator.lt, ast.LtE: operator.le, ast.Gt: operator.gt,
    ast.GtE: operator.ge, ast.Eq: operator.eq, ast.NotEq: operator.ne,
}
_FUNCS = {"abs": abs, "min": min, "max": max, "round": round,
          "sqrt": math.sqrt, "floor": math.floor, "ceil": math.ceil}


class ExprError(ValidationError):
    pass


def compile_expr(text: str) -> ast.Expression:
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExprError(f"bad expression {text!r}: {exc}") from exc
    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.BoolOp, ast.Compare, ast.Constant,
                             ast.Name, ast.Load, ast.IfExp,
                             ast.And, ast.Or)):
            continue
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            continue
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            continue
        if isinstance(node, (ast.cmpop, ast.operator, ast.unaryop, ast.boolop)):
            if type(node) in _BINOPS or type(node) in _UNARY or type(node) in _CMP \
                    or isinstance(node, (ast.And, ast.Or)):
                continue
            raise ExprError(f"operator {type(node).__name__} not allowed in {text!r}")
        if isinstance(node, ast.Call):
            if isinstance(node.func, ast.Name) and \
                    (node.func.id in _FUNCS or node.func.id == "tm") and not node.keywords:
                continue
            raise ExprError(f"call not allowed in expression {text!r}")
        raise ExprError(f"{type(node).__name__} not allowed in expression {text!r}")
    return tree


def eval_expr(text: str, variables: Optional[Mapping] = None,
              tm: Optional[Callable[[str], float]] = None):
    tree = compile_expr(text)
    variables = variables or {}

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in variables:
                return variables[node.id]
            if node.id == "True":
                return True
            if node.id == "False":
                return False
            raise ExprError(f"unknown variable {node.id!r} in {text!r}")
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.BoolOp):
            if isinstance(node.op, ast.And):
                result = True
                for v in node.values:
                    result = ev(v)
                    if not result:
                        return result
                return result
            for v in node.values:
                result = ev(v)
                if result:
                    return result
            return result
        if isinstance(node, ast.Compare):
            left = ev(node.left)
            for op, comparator in zip(node.ops, node.comparators):
                right = ev(comparator)
                if not _CMP[type(op)](left, right):
                    return False
                left = right
            return True
        if isinstance(node, ast.IfExp):
            return ev(node.body) if ev(node.test) else ev(node.orelse)
        if isinstance(node, ast.Call):
            args = [ev(a) for a in node.args]
            if node.func.id == "tm":
                if tm is None:
                    raise ExprError(f"telemetry read not available here: {text!r}")
                value = tm(*args)
                if value is None:
                    raise ExprError(f"no telemetry value for {args!r}")
                return value
            return _FUNCS[node.func.id](*args)
        raise ExprError(f"cannot evaluate {type(node).__name__}")

    return ev(tree)
