"""
Signal expressions over the step index k, e.g. ``1500*sin(2*k+1)``.

The grammar is deliberately small: numbers, ``k``, ``pi``, the operators
``+ - * / ^ **``, parentheses and the functions below. Expressions are
parsed with sympy and compiled with ``lambdify`` against ``math``.
"""
import logging
import math
import re
from dataclasses import dataclass, field
from tokenize import TokenError
from typing import Any, Callable, Optional

import sympy as sp
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from securestate.errors import ExpressionError

logger = logging.getLogger(__name__)

K = sp.Symbol("k", integer=True, nonnegative=True)

ALLOWED_FUNCTIONS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "sqrt": sp.sqrt,
    "exp": sp.exp,
    "log": sp.log,
    "abs": sp.Abs,
}

_TOKEN = re.compile(
    r"\s*(?:(?P<number>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)

_TRANSFORMATIONS = standard_transformations + (convert_xor,)


def _check_tokens(source: str, field_name: Optional[str]) -> None:
    position = 0
    stripped = source.rstrip()
    while position < len(stripped):
        match = _TOKEN.match(stripped, position)
        if not match or match.end() == position:
            raise ExpressionError(source, f"unexpected character {stripped[position]!r} at offset {position}", field_name)
        name = match.group("name")
        if name is not None and name not in ALLOWED_FUNCTIONS and name not in ("k", "pi"):
            raise ExpressionError(
                source,
                f"unknown name {name!r}; allowed are k, pi and {', '.join(sorted(ALLOWED_FUNCTIONS))}",
                field_name,
            )
        position = match.end()


@dataclass(frozen=True)
class SignalExpression:
    """A compiled real-valued function of the step index"""

    source: str
    expr: Any = field(repr=False)
    fn: Callable[[int], float] = field(repr=False, compare=False)
    field_name: Optional[str] = field(default=None, compare=False)

    def __call__(self, k: int) -> float:
        try:
            value = float(self.fn(k))
        except (ZeroDivisionError, ValueError, OverflowError, TypeError) as exc:
            raise ExpressionError(self.source, f"cannot evaluate at k={k}: {exc}", self.field_name) from exc
        if not math.isfinite(value):
            raise ExpressionError(self.source, f"not finite at k={k}", self.field_name)
        return value

    def exact(self, k: int) -> sp.Expr:
        return self.expr.subs(K, sp.Integer(k))

    @property
    def is_constant(self) -> bool:
        return not self.expr.free_symbols


def parse_signal(source, field_name: Optional[str] = None) -> SignalExpression:
    """Parse a number or expression string; raises ExpressionError with ``field_name`` on failure"""
    if isinstance(source, bool):
        raise ExpressionError(str(source), "expected a number or an expression over k", field_name)
    if isinstance(source, (int, float)):
        source = repr(source)
    if not isinstance(source, str) or not source.strip():
        raise ExpressionError(str(source), "expected a number or an expression over k", field_name)

    _check_tokens(source, field_name)
    local_dict = {"k": K, "pi": sp.pi, **ALLOWED_FUNCTIONS}
    try:
        expr = parse_expr(source, local_dict=local_dict, transformations=_TRANSFORMATIONS, evaluate=True)
    except (SyntaxError, TokenError, TypeError, ValueError, AttributeError, sp.SympifyError) as exc:
        raise ExpressionError(source, f"cannot parse expression: {exc}", field_name) from exc

    if not isinstance(expr, sp.Expr):
        raise ExpressionError(source, "expression does not evaluate to a number", field_name)
    extra = expr.free_symbols - {K}
    if extra:
        raise ExpressionError(source, f"unknown symbols {sorted(str(s) for s in extra)}", field_name)

    fn = sp.lambdify(K, expr, modules="math")
    logger.debug(f"Parsed signal {source!r} -> {expr}")
    return SignalExpression(source=source.strip(), expr=expr, fn=fn, field_name=field_name)
