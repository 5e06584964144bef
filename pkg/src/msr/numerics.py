"""Exact rationals, dyadics and the natural-number coding layer.

Rationals are ``fractions.Fraction`` values, which are always stored in lowest
terms.  Pairs use the Cantor pairing function; finite sequences are coded as
``pair(length, body)`` where ``body`` is a self-delimiting bit string of the
entries (see ``encode_seq``).
"""

from __future__ import annotations

import math
import re

try:  # much faster square roots for the multi-megabit codes of long computations
    from gmpy2 import isqrt as _isqrt
except ImportError:  # pragma: no cover
    _isqrt = math.isqrt
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

Rational = Fraction

__all__ = [
    "Rational", "Dyadic", "MalformedCode", "rat", "add", "sub", "mul", "absval",
    "rmin", "rmax", "compare", "cutoff_subtract", "pow2", "largest_dyadic_below",
    "largest_dyadic_at_most", "is_dyadic_of_level", "encode_pair", "decode_pair",
    "encode_seq", "decode_seq", "encode_rational", "decode_rational", "zigzag",
    "unzigzag", "parse_rational", "format_rational",
]


class MalformedCode(ValueError):
    """Raised when a natural number is not in the image of a decoder's encoder."""


def rat(value) -> Fraction:
    """Coerce ints, Fractions and rational literals to a Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return parse_rational(value)
    raise TypeError(f"not a rational: {value!r}")


def add(a, b) -> Fraction:
    return rat(a) + rat(b)


def sub(a, b) -> Fraction:
    return rat(a) - rat(b)


def mul(a, b) -> Fraction:
    return rat(a) * rat(b)


def absval(a) -> Fraction:
    return abs(rat(a))


def rmin(a, b) -> Fraction:
    return min(rat(a), rat(b))


def rmax(a, b) -> Fraction:
    return max(rat(a), rat(b))


def compare(a, b) -> int:
    """Return -1, 0 or 1 as ``a`` is below, equal to or above ``b``."""
    a, b = rat(a), rat(b)
    return (a > b) - (a < b)


def cutoff_subtract(x: int, y: int) -> int:
    """Natural-number subtraction truncated at zero."""
    if x < 0 or y < 0:
        raise ValueError("cutoff subtraction is defined on naturals")
    return x - y if x > y else 0


def pow2(k: int) -> Fraction:
    """Exact 2**k for any integer k."""
    return Fraction(1 << k) if k >= 0 else Fraction(1, 1 << -k)


@dataclass(frozen=True)
class Dyadic:
    """A rational of the form m / 2**level."""

    value: Fraction
    level: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("dyadic level must be a natural number")
        if (self.value * (1 << self.level)).denominator != 1:
            raise ValueError(f"{self.value} is not in D_{self.level}")

    @property
    def numerator_at_level(self) -> int:
        return int(self.value * (1 << self.level))

    def __str__(self):
        return format_rational(self.value)


def is_dyadic_of_level(x, level: int) -> bool:
    return (rat(x) * (1 << level)).denominator == 1


def largest_dyadic_below(x, level: int) -> Dyadic:
    """Greatest d in D_level with d < x (strict)."""
    x = rat(x)
    scaled = x * (1 << level)
    m = math.ceil(scaled) - 1
    return Dyadic(Fraction(m, 1 << level), level)


def largest_dyadic_at_most(x, level: int) -> Dyadic:
    """Greatest d in D_level with d <= x."""
    x = rat(x)
    m = math.floor(x * (1 << level))
    return Dyadic(Fraction(m, 1 << level), level)


# ---------------------------------------------------------------- coding


def encode_pair(a: int, b: int) -> int:
    """Cantor pairing: (a + b)(a + b + 1)/2 + b.  encode_pair(0, 0) == 0."""
    if a < 0 or b < 0:
        raise ValueError("pairing is defined on naturals")
    s = a + b
    return s * (s + 1) // 2 + b


def decode_pair(z: int) -> tuple[int, int]:
    if z < 0:
        raise MalformedCode(f"negative code {z}")
    w = (int(_isqrt(8 * z + 1)) - 1) // 2
    b = z - w * (w + 1) // 2
    return w - b, b


def zigzag(n: int) -> int:
    """Bijection Z -> N: 0, -1, 1, -2, 2, ... map to 0, 1, 2, 3, 4, ..."""
    return 2 * n if n >= 0 else -2 * n - 1


def unzigzag(k: int) -> int:
    if k < 0:
        raise MalformedCode(f"negative code {k}")
    return k // 2 if k % 2 == 0 else -(k + 1) // 2


def _gamma(m: int) -> str:
    bits = bin(m)[2:]
    return "0" * (len(bits) - 1) + bits


def encode_seq(seq: Iterable[int]) -> int:
    """Code a finite sequence of naturals as pair(length, body).

    The body is the integer whose binary expansion is a leading 1 followed by
    the Elias-gamma codes of entry + 1, so code size grows linearly with the
    total bit length of the entries.
    """
    items = list(seq)
    parts = ["1"]
    for v in items:
        if not isinstance(v, int) or v < 0:
            raise ValueError(f"sequence entries must be naturals, got {v!r}")
        parts.append(_gamma(v + 1))
    return encode_pair(len(items), int("".join(parts), 2))


def decode_seq(code: int) -> tuple[int, ...]:
    length, body = decode_pair(code)
    if body == 0:
        raise MalformedCode(f"{code} has an empty sequence body")
    bits = bin(body)[3:]
    out = []
    pos = 0
    for _ in range(length):
        zeros = 0
        while pos < len(bits) and bits[pos] == "0":
            zeros += 1
            pos += 1
        end = pos + zeros + 1
        if end > len(bits):
            raise MalformedCode(f"{code} is truncated")
        out.append(int(bits[pos:end], 2) - 1)
        pos = end
    if pos != len(bits):
        raise MalformedCode(f"{code} has trailing bits")
    return tuple(out)


def encode_rational(q) -> int:
    q = rat(q)
    return encode_pair(zigzag(q.numerator), q.denominator - 1)


def decode_rational(code: int) -> Fraction:
    zn, dm1 = decode_pair(code)
    num, den = unzigzag(zn), dm1 + 1
    if math.gcd(num, den) != 1:
        raise MalformedCode(f"{code} codes the unreduced fraction {num}/{den}")
    return Fraction(num, den)


# ---------------------------------------------------------------- literals

_RATIONAL_RE = re.compile(r"^(-?)(\d+)(?:/(\d+))?$")


def parse_rational(text: str) -> Fraction:
    """Parse ``[-]digits[/digits]``."""
    m = _RATIONAL_RE.match(text.strip())
    if not m:
        raise ValueError(f"bad rational literal {text!r}")
    sign, num, den = m.groups()
    den_v = int(den) if den is not None else 1
    if den_v == 0:
        raise ValueError(f"zero denominator in {text!r}")
    value = Fraction(int(num), den_v)
    return -value if sign else value


def format_rational(q) -> str:
    q = rat(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def format_seq(seq: Sequence) -> str:
    return "(" + ", ".join(format_rational(v) if isinstance(v, (int, Fraction)) else str(v) for v in seq) + ")"
