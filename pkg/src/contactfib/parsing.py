"""Grammar for scalar and form expressions in scenario documents.

Infix arithmetic with ``^`` for integer powers, the function names
sin/cos/exp/sqrt/bump, the constant ``pi``, differentials written ``d<coord>``
(resolved against the chart the expression is parsed for), and ``wedge``
between form factors.  Precedence, loosest first: ``+ -`` then ``wedge`` then
``* /`` then unary sign then ``^``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Union

from .charts import Chart
from .expressions import PI, Expr, Var, as_expr, bump, cos, exp, sin, sqrt
from .forms import DifferentialForm, form_power, function_form, wedge

_FUNCTIONS = {"sin": sin, "cos": cos, "exp": exp, "sqrt": sqrt, "bump": bump}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


class ParseError(ValueError):
    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column})")
        self.column = column


@dataclass
class _Token:
    kind: str  # number | name | op | end
    text: str
    column: int


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            col = len(text) - len(stripped) + 1
            raise ParseError(f"unexpected character {stripped[0]!r}", col)
        pos = m.end()
        for kind in ("number", "name", "op"):
            val = m.group(kind)
            if val is not None:
                tokens.append(_Token(kind, val, m.start(kind) + 1))
                break
    tokens.append(_Token("end", "", len(text) + 1))
    return tokens


Value = Union[Expr, DifferentialForm]


class _Parser:
    def __init__(self, text: str, chart: Optional[Chart]):
        self.text = text
        self.chart = chart
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        tok = self.next()
        if tok.kind != "op" or tok.text != op:
            raise ParseError(f"expected {op!r}, found {tok.text or 'end of input'!r}", tok.column)

    # -- grammar -------------------------------------------------------------

    def parse(self) -> Value:
        value = self.sum_expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected trailing input {tok.text!r}", tok.column)
        return value

    def sum_expr(self) -> Value:
        value = self.wedge_expr()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "+-":
                self.next()
                rhs = self.wedge_expr()
                value = self._add(value, rhs, tok)
            else:
                return value

    def wedge_expr(self) -> Value:
        value = self.product()
        while True:
            tok = self.peek()
            if tok.kind == "name" and tok.text == "wedge":
                self.next()
                rhs = self.product()
                value = self._wedge(value, rhs, tok)
            else:
                return value

    def product(self) -> Value:
        value = self.unary()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "*/":
                self.next()
                rhs = self.unary()
                value = self._mul_div(value, rhs, tok)
            else:
                return value

    def unary(self) -> Value:
        tok = self.peek()
        if tok.kind == "op" and tok.text in "+-":
            self.next()
            value = self.unary()
            if tok.text == "-":
                return -value if isinstance(value, Expr) else value * -1
            return value
        return self.power()

    def power(self) -> Value:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.next()
            k = self._integer_exponent()
            if isinstance(base, DifferentialForm):
                if base.degree == 0:
                    return function_form(base.chart, base.coeffs.get((), as_expr(0)) ** k)
                if k < 0:
                    raise ParseError("forms admit only nonnegative integer powers", tok.column)
                return form_power(base, k)
            return base ** k
        return base

    def _integer_exponent(self) -> int:
        sign = 1
        tok = self.peek()
        if tok.kind == "op" and tok.text == "(":
            self.next()
            inner = self._integer_exponent()
            self.expect_op(")")
            return inner
        if tok.kind == "op" and tok.text in "+-":
            self.next()
            sign = -1 if tok.text == "-" else 1
            tok = self.peek()
        tok = self.next()
        if tok.kind != "number" or not re.fullmatch(r"\d+", tok.text):
            raise ParseError("exponent must be an integer", tok.column)
        return sign * int(tok.text)

    def atom(self) -> Value:
        tok = self.next()
        if tok.kind == "number":
            text = tok.text
            if re.fullmatch(r"\d+", text):
                return as_expr(int(text))
            return as_expr(float(text))
        if tok.kind == "op" and tok.text == "(":
            value = self.sum_expr()
            self.expect_op(")")
            return value
        if tok.kind == "name":
            name = tok.text
            if name == "pi":
                return PI
            if name == "wedge":
                raise ParseError("'wedge' needs a left operand", tok.column)
            if name in _FUNCTIONS:
                self.expect_op("(")
                arg = self.sum_expr()
                self.expect_op(")")
                if isinstance(arg, DifferentialForm):
                    raise ParseError(f"{name}() expects a scalar argument", tok.column)
                return _FUNCTIONS[name](arg)
            if (
                self.chart is not None
                and len(name) > 1
                and name.startswith("d")
                and name[1:] in self.chart.coords
            ):
                i = self.chart.index(name[1:])
                return DifferentialForm(self.chart, 1, {(i,): as_expr(1)})
            return Var(name)
        raise ParseError(f"unexpected {tok.text or 'end of input'!r}", tok.column)

    # -- mixed scalar/form arithmetic -----------------------------------------

    def _as_form(self, v: Value) -> DifferentialForm:
        if isinstance(v, DifferentialForm):
            return v
        if self.chart is None:
            raise ParseError("forms are not allowed in a scalar context", self.peek().column)
        return function_form(self.chart, v)

    def _add(self, a: Value, b: Value, tok: _Token) -> Value:
        if isinstance(a, Expr) and isinstance(b, Expr):
            return a + b if tok.text == "+" else a - b
        fa, fb = self._as_form(a), self._as_form(b)
        if fa.degree != fb.degree:
            raise ParseError(
                f"cannot add a {fa.degree}-form and a {fb.degree}-form", tok.column
            )
        return fa + fb if tok.text == "+" else fa - fb

    def _wedge(self, a: Value, b: Value, tok: _Token) -> Value:
        return wedge(self._as_form(a), self._as_form(b))

    def _mul_div(self, a: Value, b: Value, tok: _Token) -> Value:
        if tok.text == "/":
            if isinstance(b, DifferentialForm):
                raise ParseError("cannot divide by a form", tok.column)
            if isinstance(a, DifferentialForm):
                return a * (as_expr(1) / b)
            return a / b
        if isinstance(a, DifferentialForm) and isinstance(b, DifferentialForm):
            if a.degree == 0:
                return b * a.coeffs.get((), as_expr(0))
            if b.degree == 0:
                return a * b.coeffs.get((), as_expr(0))
            raise ParseError("use 'wedge' to multiply forms", tok.column)
        if isinstance(a, DifferentialForm):
            return a * b
        if isinstance(b, DifferentialForm):
            return b * a
        return a * b


def parse_scalar(text: str) -> Expr:
    """Parse a scalar expression (differentials rejected)."""
    value = _Parser(text, None).parse()
    if isinstance(value, DifferentialForm):
        raise ParseError("expected a scalar expression, found a form", 1)
    return value


def parse_form(text: str, chart: Chart) -> DifferentialForm:
    """Parse a differential-form expression against a chart; a scalar result
    is promoted to a 0-form."""
    value = _Parser(text, chart).parse()
    if isinstance(value, Expr):
        return function_form(chart, value)
    return value


def parse_number(value) -> float:
    """A numeric scenario field: either a number or a constant expression
    string such as "2*pi"."""
    if isinstance(value, (int, float)):
        return float(value)
    expr = parse_scalar(str(value))
    stray = expr.variables()
    if stray:
        raise ParseError(f"constant expression contains variables {sorted(stray)}", 1)
    return float(expr.evaluate({}))
