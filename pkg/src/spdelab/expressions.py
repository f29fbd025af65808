"""Closed-form expression grammar for coefficients, nonlinearities and data.

Grammar (all case-sensitive):

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | atom
    atom  := NUMBER | 'pi' | variable | func '(' expr (',' expr)* ')' | '(' expr ')'
    func  := sin | cos | exp | abs | min | max

`min` and `max` take two or more arguments; the other functions take one.
The admissible variables are fixed per context (coefficients see x and n,
nonlinearities see u and n).  Evaluation is vectorized over numpy arrays.
"""

from __future__ import annotations

import math
import re

import numpy as np


class ExpressionError(ValueError):
    """Parse or evaluation failure; message carries source and position."""

    def __init__(self, message, source, position):
        self.source = source
        self.position = position
        super().__init__(f"{message} at position {position} in {source!r}")


_TOKEN_RE = re.compile(
    r"(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/(),])"
)

_UNARY_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}
_VARIADIC_FUNCS = {"min": np.minimum, "max": np.maximum}


def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos].isspace():
            pos += 1
            continue
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            raise ExpressionError(f"unexpected character {source[pos]!r}", source, pos)
        if match.group("number") is not None:
            kind = "number"
        elif match.group("name") is not None:
            kind = "name"
        else:
            kind = "op"
        tokens.append((kind, match.group(0), pos))
        pos = match.end(0)
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source, variables):
        self.source = source
        self.variables = set(variables)
        self.tokens = _tokenize(source)
        self.index = 0

    def peek(self):
        return self.tokens[self.index]

    def advance(self):
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, text):
        kind, value, pos = self.peek()
        if value != text:
            raise ExpressionError(f"expected {text!r}, found {value or 'end of input'!r}", self.source, pos)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"trailing input {value!r}", self.source, pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.advance()[1]
            right = self.term()
            node = ("add" if op == "+" else "sub", node, right)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.advance()[1]
            right = self.unary()
            node = ("mul" if op == "*" else "div", node, right)
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.advance()
            return ("neg", self.unary())
        return self.atom()

    def atom(self):
        kind, value, pos = self.peek()
        if kind == "number":
            self.advance()
            return ("const", float(value))
        if kind == "name":
            self.advance()
            if value == "pi":
                return ("const", math.pi)
            if value in _UNARY_FUNCS or value in _VARIADIC_FUNCS:
                self.expect("(")
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                if value in _UNARY_FUNCS and len(args) != 1:
                    raise ExpressionError(f"{value} takes exactly one argument", self.source, pos)
                if value in _VARIADIC_FUNCS and len(args) < 2:
                    raise ExpressionError(f"{value} takes at least two arguments", self.source, pos)
                return ("call", value, args)
            if value in self.variables:
                return ("var", value)
            raise ExpressionError(
                f"unknown name {value!r} (allowed variables: {sorted(self.variables)})",
                self.source,
                pos,
            )
        if value == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionError(f"expected a value, found {value or 'end of input'!r}", self.source, pos)


def _evaluate(node, env):
    op = node[0]
    if op == "const":
        return node[1]
    if op == "var":
        return env[node[1]]
    if op == "neg":
        return -_evaluate(node[1], env)
    if op == "add":
        return _evaluate(node[1], env) + _evaluate(node[2], env)
    if op == "sub":
        return _evaluate(node[1], env) - _evaluate(node[2], env)
    if op == "mul":
        return _evaluate(node[1], env) * _evaluate(node[2], env)
    if op == "div":
        return _evaluate(node[1], env) / _evaluate(node[2], env)
    if op == "call":
        name, args = node[1], node[2]
        values = [_evaluate(arg, env) for arg in args]
        if name in _UNARY_FUNCS:
            return _UNARY_FUNCS[name](values[0])
        out = values[0]
        for value in values[1:]:
            out = _VARIADIC_FUNCS[name](out, value)
        return out
    raise AssertionError(f"unreachable node {op}")


class Expression:
    """A compiled expression; call with keyword arguments for its variables."""

    def __init__(self, source: str, variables: tuple[str, ...]):
        self.source = source
        self.variables = tuple(variables)
        self._ast = _Parser(source, variables).parse()

    def __call__(self, **env):
        missing = set(self.variables) - set(env)
        if missing:
            raise ExpressionError(f"missing variables {sorted(missing)}", self.source, 0)
        return _evaluate(self._ast, env)

    def bind(self, **fixed) -> "Expression":
        """Partially apply some variables (e.g. fix the approximation index n)."""
        bound = Expression.__new__(Expression)
        bound.source = self.source
        bound.variables = tuple(v for v in self.variables if v not in fixed)
        ast = self._ast
        for name, value in fixed.items():
            ast = _substitute(ast, name, float(value))
        bound._ast = ast
        return bound

    def __repr__(self):
        return f"Expression({self.source!r}, variables={self.variables})"


def _substitute(node, name, value):
    op = node[0]
    if op == "var":
        return ("const", value) if node[1] == name else node
    if op in ("const",):
        return node
    if op == "neg":
        return ("neg", _substitute(node[1], name, value))
    if op in ("add", "sub", "mul", "div"):
        return (op, _substitute(node[1], name, value), _substitute(node[2], name, value))
    if op == "call":
        return ("call", node[1], [_substitute(arg, name, value) for arg in node[2]])
    raise AssertionError(f"unreachable node {op}")


def compile_expression(source: str, variables: tuple[str, ...]) -> Expression:
    return Expression(source, variables)
