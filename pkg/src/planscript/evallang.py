"""A closed expression language for EVAL steps.

Expressions are parsed into a small AST and interpreted directly; no host
evaluation facility is involved. Scalar values are plain Python objects:
``bool`` (Boolean), ``int`` (Number) and ``str`` (Text). Every string atom is
coerced before an operator sees it, so ``yes == True`` holds and ``'3' < 4``
compares two Numbers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

Scalar = Union[bool, int, str]


class EvalError(Exception):
    pass


class UnboundVariable(EvalError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable {name!r}")
        self.name = name


class ExprSyntaxError(EvalError):
    pass


class TypeMismatch(EvalError):
    pass


_DIGITS = re.compile(r"-?[0-9]+")


def coerce(raw: str) -> Scalar:
    """Digit strings become Numbers, yes/no become Booleans, the rest stays Text."""
    text = raw.strip()
    if _DIGITS.fullmatch(text):
        return int(text)
    lowered = text.lower()
    if lowered == "yes":
        return True
    if lowered == "no":
        return False
    return raw


def kind_of(value: Scalar) -> str:
    if isinstance(value, bool):
        return "Boolean"
    if isinstance(value, int):
        return "Number"
    if isinstance(value, str):
        return "Text"
    raise TypeMismatch(f"not a scalar value: {value!r}")


def display(value: Scalar) -> str:
    """Answer form: Booleans read as yes/no."""
    if isinstance(value, bool):
        return "yes" if value else "no"
    return str(value)


def format_value(value) -> str:
    """Placeholder form used when filling ``{VAR}`` templates."""
    if isinstance(value, bool):
        return "True" if value else "False"
    return str(value)


_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


def placeholders(template: str) -> list[str]:
    return _PLACEHOLDER.findall(template)


def substitute(template: str, env: Mapping[str, object]) -> str:
    def fill(m: re.Match) -> str:
        name = m.group(1)
        if name not in env:
            raise UnboundVariable(name)
        return format_value(env[name])

    return _PLACEHOLDER.sub(fill, template)


_YES_NO = re.compile(r"(==|!=)(\s*)(['\"])(yes|no)\3(?![A-Za-z0-9_])", re.IGNORECASE)


def yes_no_targets(expr_text: str) -> list[str]:
    """Lower-cased ``yes``/``no`` literals that :func:`rewrite_yes_no` would replace."""
    return [m.group(4).lower() for m in _YES_NO.finditer(expr_text)]


def rewrite_yes_no(expr_text: str) -> str:
    """Replace ``== 'yes'`` with ``== True`` and ``== 'no'`` with ``== False``."""

    def repl(m: re.Match) -> str:
        literal = "True" if m.group(4).lower() == "yes" else "False"
        return f"{m.group(1)}{m.group(2)}{literal}"

    return _YES_NO.sub(repl, expr_text)


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: Scalar


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Lit, Var, Unary, Binary]

COMPARISONS = ("==", "!=", "<=", ">=", "<", ">")
KEYWORDS = {"and", "or", "not", "in", "True", "False"}

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<str>'[^']*'|"[^"]*")
  | (?P<num>-?[0-9]+)
  | (?P<op>==|!=|<=|>=|<|>|\+|-|\*|\(|\))
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)
# hyphenated or apostrophized answers such as "t-shirt" stay one word
_WORD_TAIL = re.compile(r"(?:[-'][A-Za-z][A-Za-z0-9_]*)+")


@dataclass(frozen=True)
class _Tok:
    kind: str  # str | num | op | word | kw | end
    text: str


def _operand_expected(tokens: list[_Tok]) -> bool:
    if not tokens:
        return True
    prev = tokens[-1]
    return prev.kind == "kw" and prev.text not in ("True", "False") or (
        prev.kind == "op" and prev.text != ")"
    )


def _tokenize(text: str, variables: bool) -> list[_Tok]:
    tokens: list[_Tok] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r} at {pos}")
        kind = m.lastgroup
        value = m.group(0)
        if kind == "num" and value.startswith("-") and not _operand_expected(tokens):
            # binary minus: emit the operator alone, lex the digits next round
            kind, value = "op", "-"
        pos += len(value)
        if kind == "ws":
            continue
        if kind == "word":
            if not variables:
                tail = _WORD_TAIL.match(text, pos)
                if tail:
                    value += tail.group(0)
                    pos = tail.end()
            if value in KEYWORDS:
                kind = "kw"
        tokens.append(_Tok(kind, value))
    tokens.append(_Tok("end", ""))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Tok], variables: bool):
        self.tokens = tokens
        self.i = 0
        self.variables = variables

    def peek(self) -> _Tok:
        return self.tokens[self.i]

    def take(self) -> _Tok:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at(self, *texts: str) -> bool:
        tok = self.peek()
        return tok.kind in ("op", "kw") and tok.text in texts

    def parse(self) -> Expr:
        if self.peek().kind == "end":
            raise ExprSyntaxError("empty expression")
        node = self.or_expr()
        if self.peek().kind != "end":
            raise ExprSyntaxError(f"unexpected token {self.peek().text!r}")
        return node

    def or_expr(self) -> Expr:
        node = self.and_expr()
        while self.at("or"):
            self.take()
            node = Binary("or", node, self.and_expr())
        return node

    def and_expr(self) -> Expr:
        node = self.not_expr()
        while self.at("and"):
            self.take()
            node = Binary("and", node, self.not_expr())
        return node

    def not_expr(self) -> Expr:
        if self.at("not"):
            self.take()
            return Unary("not", self.not_expr())
        return self.cmp_expr()

    def cmp_expr(self) -> Expr:
        node = self.in_expr()
        if self.at(*COMPARISONS):
            op = self.take().text
            node = Binary(op, node, self.in_expr())
            if self.at(*COMPARISONS):
                raise ExprSyntaxError("chained comparisons are not supported")
        return node

    def in_expr(self) -> Expr:
        node = self.add_expr()
        if self.at("in"):
            self.take()
            node = Binary("in", node, self.add_expr())
            if self.at("in"):
                raise ExprSyntaxError("chained 'in' is not supported")
        return node

    def add_expr(self) -> Expr:
        node = self.mul_expr()
        while self.at("+", "-"):
            op = self.take().text
            node = Binary(op, node, self.mul_expr())
        return node

    def mul_expr(self) -> Expr:
        node = self.atom()
        while self.at("*"):
            self.take()
            node = Binary("*", node, self.atom())
        return node

    def atom(self) -> Expr:
        tok = self.take()
        if tok.kind == "num":
            return Lit(int(tok.text))
        if tok.kind == "str":
            return Lit(tok.text[1:-1])
        if tok.kind == "kw" and tok.text in ("True", "False"):
            return Lit(tok.text == "True")
        if tok.kind == "op" and tok.text == "(":
            node = self.or_expr()
            if not self.at(")"):
                raise ExprSyntaxError("missing ')'")
            self.take()
            return node
        if tok.kind == "word":
            if self.variables:
                return Var(tok.text)
            # a substituted answer may span several words ("dark brown")
            words = [tok.text]
            while self.peek().kind == "word":
                words.append(self.take().text)
            return Lit(" ".join(words))
        shown = tok.text or "end of expression"
        raise ExprSyntaxError(f"unexpected {shown!r}")


def parse_expr(text: str, variables: bool = False) -> Expr:
    """Parse an expression.

    With ``variables=False`` (the post-substitution form) bare words are Text
    atoms; with ``variables=True`` they are variable references resolved at
    evaluation time.
    """
    return _Parser(_tokenize(text, variables), variables).parse()


def _need(value: Scalar, kind: str, op: str) -> Scalar:
    if kind_of(value) != kind:
        raise TypeMismatch(f"{op!r} needs {kind}, got {kind_of(value)} {value!r}")
    return value


def eval_expr(expr: Expr, env: Mapping[str, object] | None = None) -> Scalar:
    if isinstance(expr, Lit):
        return coerce(expr.value) if isinstance(expr.value, str) else expr.value
    if isinstance(expr, Var):
        if env is None or expr.name not in env:
            raise UnboundVariable(expr.name)
        value = env[expr.name]
        if isinstance(value, str):
            return coerce(value)
        kind_of(value)
        return value
    if isinstance(expr, Unary):
        return not _need(eval_expr(expr.operand, env), "Boolean", "not")
    op = expr.op
    left = eval_expr(expr.left, env)
    if op in ("and", "or"):
        _need(left, "Boolean", op)
        if (op == "and" and not left) or (op == "or" and left):
            return left
        return _need(eval_expr(expr.right, env), "Boolean", op)
    right = eval_expr(expr.right, env)
    if op in ("==", "!="):
        same = kind_of(left) == kind_of(right) and left == right
        return same if op == "==" else not same
    if op == "in":
        return _need(left, "Text", op) in _need(right, "Text", op)
    _need(left, "Number", op)
    _need(right, "Number", op)
    if op == "<":
        return left < right
    if op == ">":
        return left > right
    if op == "<=":
        return left <= right
    if op == ">=":
        return left >= right
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    raise ExprSyntaxError(f"unknown operator {op!r}")


def evaluate(template: str, env: Mapping[str, object]) -> Scalar:
    """Fill, normalize and evaluate an EVAL template in one go."""
    text = rewrite_yes_no(substitute(template, env))
    return eval_expr(parse_expr(text))
