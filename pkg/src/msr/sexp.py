"""Tiny s-expression reader/writer used by functional codes and scheme files."""

from __future__ import annotations

import re
from fractions import Fraction

from .numerics import format_rational

__all__ = ["parse_sexp", "parse_sexps", "to_sexp", "SexpError"]

_TOKEN = re.compile(r"\s*(?:(;[^\n]*)|(\()|(\))|([^\s()]+))")
_INT = re.compile(r"^-?\d+$")
_RAT = re.compile(r"^-?\d+/\d+$")


class SexpError(ValueError):
    pass


def _atom(tok: str):
    if _INT.match(tok):
        return int(tok)
    if _RAT.match(tok):
        num, den = tok.split("/")
        if int(den) == 0:
            raise SexpError(f"zero denominator in {tok}")
        q = Fraction(int(num), int(den))
        return q.numerator if q.denominator == 1 else q
    return tok


def _tokens(text: str):
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip() == "":
                return
            raise SexpError(f"cannot tokenize near {text[pos:pos + 20]!r}")
        pos = m.end()
        comment, lp, rp, atom = m.groups()
        if comment:
            continue
        if lp:
            yield "("
        elif rp:
            yield ")"
        elif atom:
            yield atom


def parse_sexps(text: str) -> list:
    stack: list[list] = [[]]
    for tok in _tokens(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise SexpError("unbalanced ')'")
            done = tuple(stack.pop())
            stack[-1].append(done)
        else:
            stack[-1].append(_atom(tok))
    if len(stack) != 1:
        raise SexpError("unbalanced '('")
    return stack[0]


def parse_sexp(text: str):
    items = parse_sexps(text)
    if len(items) != 1:
        raise SexpError(f"expected one expression, found {len(items)}")
    return items[0]


def to_sexp(obj) -> str:
    if isinstance(obj, tuple):
        return "(" + " ".join(to_sexp(o) for o in obj) + ")"
    if isinstance(obj, bool):
        return "1" if obj else "0"
    if isinstance(obj, (int, Fraction)):
        return format_rational(obj)
    if isinstance(obj, str):
        return obj
    raise SexpError(f"cannot serialize {obj!r}")
