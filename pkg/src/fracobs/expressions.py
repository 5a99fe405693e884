"""Tiny arithmetic expression language for config-supplied functions.

Configuration files describe loads and obstacles as strings like
``"0.2 - x*x"`` or ``"sin(2*x) + exp(-x)"``.  The grammar is fixed and
small on purpose:

    numeric literals, the variable  x,
    binary  + - * /,  unary  + -,
    calls   sin  cos  exp  abs  min  max,
    parentheses.

No power operator, no other names, no attribute access, no subscripts.
Strings are parsed once with the ``ast`` module, every node is checked
against the whitelist above, and the result is compiled into a closure
that evaluates vectorized over numpy arrays.  Anything outside the
grammar is a validation error naming the offending construct; malformed
syntax carries the parser's location.
"""

import ast

import numpy as np

from .errors import ValidationError

__all__ = ["compile_expression", "EXPRESSION_GRAMMAR"]

EXPRESSION_GRAMMAR = (
    "literals, x, + - * /, unary -, sin(t), cos(t), exp(t), abs(t), "
    "min(a, b, ...), max(a, b, ...), parentheses"
)

_ONE_ARG = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}
_FOLDS = {"min": np.minimum, "max": np.maximum}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract,
           ast.Mult: np.multiply, ast.Div: np.divide}


def _compile_node(node, source):
    if isinstance(node, ast.Expression):
        return _compile_node(node.body, source)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ValidationError(
                f"expression {source!r}: only numeric literals are allowed, "
                f"got {node.value!r}"
            )
        val = float(node.value)
        return lambda x: val
    if isinstance(node, ast.Name):
        if node.id != "x":
            raise ValidationError(
                f"expression {source!r}: unknown name {node.id!r}; "
                f"the only variable is x"
            )
        return lambda x: x
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        inner = _compile_node(node.operand, source)
        if isinstance(node.op, ast.UAdd):
            return inner
        return lambda x: np.negative(inner(x))
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left = _compile_node(node.left, source)
        right = _compile_node(node.right, source)
        return lambda x: op(left(x), right(x))
    if isinstance(node, ast.Call):
        if node.keywords or not isinstance(node.func, ast.Name):
            raise ValidationError(
                f"expression {source!r}: calls take plain positional "
                f"arguments to a known function name"
            )
        name = node.func.id
        args = [_compile_node(a, source) for a in node.args]
        if name in _ONE_ARG:
            if len(args) != 1:
                raise ValidationError(
                    f"expression {source!r}: {name}() takes exactly one "
                    f"argument, got {len(args)}"
                )
            fn, arg = _ONE_ARG[name], args[0]
            return lambda x: fn(arg(x))
        if name in _FOLDS:
            if len(args) < 2:
                raise ValidationError(
                    f"expression {source!r}: {name}() needs at least two "
                    f"arguments"
                )
            fold = _FOLDS[name]
            def run(x, _fold=fold, _args=args):
                acc = _args[0](x)
                for a in _args[1:]:
                    acc = _fold(acc, a(x))
                return acc
            return run
        raise ValidationError(
            f"expression {source!r}: unknown function {name!r}; allowed: "
            f"{', '.join(sorted(_ONE_ARG) + sorted(_FOLDS))}"
        )
    kind = type(node).__name__
    raise ValidationError(
        f"expression {source!r}: {kind} is outside the grammar "
        f"({EXPRESSION_GRAMMAR})"
    )


def compile_expression(text):
    """Parse one expression string into a vectorized callable of x.

    The returned function accepts a float or ndarray and returns the
    elementwise value as a float ndarray (scalar in, scalar out).  Its
    ``source`` attribute keeps the original text.  Invalid syntax or any
    construct outside the grammar raises ValidationError.
    """
    if not isinstance(text, str):
        raise ValidationError(
            f"expected an expression string, got {type(text).__name__}"
        )
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(
            f"expression {text!r}: syntax error at column "
            f"{exc.offset}: {exc.msg}"
        ) from None
    body = _compile_node(tree, text)

    def fn(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.asarray(body(x), dtype=float)
        out = np.broadcast_to(out, x.shape)
        return float(out[()]) if x.ndim == 0 else out.copy()

    fn.source = text
    return fn
