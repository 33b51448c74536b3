"""Minimal arithmetic grammar for coefficient expressions.

Config files may define p, q and r as expressions in the variable ``y``
using ``+ - * / ^``, the functions ``exp log sin cos sqrt`` and numeric
literals.  The grammar is deliberately tiny so that it stays auditable;
anything richer belongs in a tabulated sample file.

``^`` is right-associative exponentiation and binds tighter than unary
minus, so ``-y^2`` means ``-(y^2)``.  Every parse failure raises
:class:`~nsbf.errors.ExpressionError` carrying the 1-based column of the
offending character, which the command-line front end passes through to
the user.
"""

from __future__ import annotations

import re
from typing import Callable, List, Tuple

import numpy as np

from .errors import ExpressionError

__all__ = ["Expression", "parse_expression", "FUNCTIONS"]

#: Function names admitted by the grammar, mapped to their vectorised forms.
FUNCTIONS = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
}

_NUMBER = re.compile(r"\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?")
_NAME = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")

# Token kinds: "num", "name", or one of the literal operator characters.
Token = Tuple[str, object, int]  # (kind, value, 1-based column)


def _tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "+-*/^()":
            tokens.append((ch, ch, i + 1))
            i += 1
            continue
        m = _NUMBER.match(text, i)
        if m:
            tokens.append(("num", float(m.group()), i + 1))
            i = m.end()
            continue
        m = _NAME.match(text, i)
        if m:
            tokens.append(("name", m.group(), i + 1))
            i = m.end()
            continue
        raise ExpressionError(f"unexpected character {ch!r}", column=i + 1)
    tokens.append(("end", None, n + 1))
    return tokens


class Expression:
    """A parsed coefficient expression; callable on scalars or arrays."""

    __slots__ = ("text", "_fn")

    def __init__(self, text: str, fn: Callable):
        self.text = text
        self._fn = fn

    def __call__(self, y):
        return self._fn(np.asarray(y, dtype=np.float64))

    def __repr__(self):
        return f"Expression({self.text!r})"


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> Token:
        tok = self.next()
        if tok[0] != kind:
            what = "end of expression" if tok[0] == "end" else repr(tok[1])
            raise ExpressionError(f"expected {kind!r}, found {what}", column=tok[2])
        return tok

    # expr := term (('+'|'-') term)*
    def expr(self) -> Callable:
        fn = self.term()
        while self.peek()[0] in "+-":
            op = self.next()[0]
            rhs = self.term()
            lhs = fn
            if op == "+":
                fn = lambda y, a=lhs, b=rhs: a(y) + b(y)
            else:
                fn = lambda y, a=lhs, b=rhs: a(y) - b(y)
        return fn

    # term := unary (('*'|'/') unary)*
    def term(self) -> Callable:
        fn = self.unary()
        while self.peek()[0] in "*/":
            op = self.next()[0]
            rhs = self.unary()
            lhs = fn
            if op == "*":
                fn = lambda y, a=lhs, b=rhs: a(y) * b(y)
            else:
                fn = lambda y, a=lhs, b=rhs: a(y) / b(y)
        return fn

    # unary := ('-'|'+') unary | power
    def unary(self) -> Callable:
        tok = self.peek()
        if tok[0] == "-":
            self.next()
            inner = self.unary()
            return lambda y, a=inner: -a(y)
        if tok[0] == "+":
            self.next()
            return self.unary()
        return self.power()

    # power := atom ('^' unary)?   (right-associative)
    def power(self) -> Callable:
        base = self.atom()
        if self.peek()[0] == "^":
            self.next()
            exponent = self.unary()
            return lambda y, a=base, b=exponent: a(y) ** b(y)
        return base

    def atom(self) -> Callable:
        tok = self.next()
        kind, value, col = tok
        if kind == "num":
            return lambda y, v=value: np.full_like(y, v)
        if kind == "name":
            if value == "y":
                return lambda y: y
            fn = FUNCTIONS.get(value)
            if fn is None:
                raise ExpressionError(
                    f"unknown name {value!r} (allowed: y, "
                    + ", ".join(sorted(FUNCTIONS)) + ")",
                    column=col,
                )
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return lambda y, f=fn, a=arg: f(a(y))
        if kind == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "end":
            raise ExpressionError("unexpected end of expression", column=col)
        raise ExpressionError(f"unexpected {value!r}", column=col)


def parse_expression(text: str) -> Expression:
    """Parse an expression in ``y`` and return a vectorised callable.

    Raises
    ------
    ExpressionError
        Any lexical or syntactic problem, with the 1-based column of the
        offending character attached.
    """
    if not text or not text.strip():
        raise ExpressionError("empty expression", column=1)
    parser = _Parser(text)
    fn = parser.expr()
    tail = parser.peek()
    if tail[0] != "end":
        raise ExpressionError(
            f"unexpected trailing {tail[1]!r}", column=tail[2]
        )
    return Expression(text, fn)
