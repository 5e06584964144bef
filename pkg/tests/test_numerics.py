import math
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from conftest import rationals
from msr.numerics import (Dyadic, MalformedCode, absval, add, compare, cutoff_subtract,
                          decode_pair, decode_rational, decode_seq, encode_pair,
                          encode_rational, encode_seq, format_rational, largest_dyadic_below,
                          mul, parse_rational, pow2, rmax, rmin, sub)

nats = st.integers(0, 10**12)


def test_arith_examples():
    assert add(F(1, 3), F(1, 6)) == F(1, 2)
    assert cutoff_subtract(2, 5) == 0
    assert cutoff_subtract(5, 2) == 3
    assert absval(F(-3, 8)) == F(3, 8)
    assert rmin(F(1, 2), F(1, 3)) == F(1, 3) and rmax(F(1, 2), F(1, 3)) == F(1, 2)


@given(rationals(), rationals())
def test_results_are_canonical(a, b):
    for r in (add(a, b), sub(a, b), mul(a, b), absval(a)):
        assert math.gcd(r.numerator, r.denominator) == 1 and r.denominator >= 1
    assert compare(a, b) == -compare(b, a)
    assert (compare(a, b) == 0) == (a == b)


def test_zero_is_zero_over_one():
    z = sub(F(2, 7), F(4, 14))
    assert (z.numerator, z.denominator) == (0, 1)


@pytest.mark.parametrize("x,level,expected", [
    (F(1, 3), 2, F(1, 4)),
    (F(1, 3), 4, F(5, 16)),
    (F(1, 2), 1, F(0)),
    (F(-1, 3), 1, F(-1, 2)),
])
def test_largest_dyadic_below_examples(x, level, expected):
    d = largest_dyadic_below(x, level)
    assert d == Dyadic(expected, level)


def _ldb_by_enumeration(x, level):
    step = F(1, 2 ** level)
    m = math.floor(x / step) + 1
    while m * step >= x:
        m -= 1
    return m * step


@given(rationals(), st.integers(0, 16))
def test_largest_dyadic_below_brackets(x, level):
    d = largest_dyadic_below(x, level).value
    assert d < x <= d + pow2(-level)
    assert d == _ldb_by_enumeration(x, level)


def test_dyadic_rejects_wrong_level():
    with pytest.raises(ValueError):
        Dyadic(F(1, 3), 4)


def test_coding_examples():
    assert decode_seq(encode_seq([3, 1, 4])) == (3, 1, 4)
    assert encode_pair(0, 0) == 0
    assert decode_rational(encode_rational(F(-2, 7))) == F(-2, 7)
    # Cantor pairing, first diagonal
    assert [encode_pair(0, 1), encode_pair(1, 0), encode_pair(0, 2)] == [2, 1, 5]


@given(nats, nats)
def test_pair_round_trip(a, b):
    assert decode_pair(encode_pair(a, b)) == (a, b)


@given(st.lists(st.integers(0, 10**6), max_size=12))
def test_seq_round_trip(s):
    assert decode_seq(encode_seq(s)) == tuple(s)


@given(rationals(10**9, 10**9))
def test_rational_round_trip(q):
    assert decode_rational(encode_rational(q)) == q
    assert parse_rational(format_rational(q)) == q


def test_encoders_injective_on_random_inputs():
    import random
    rng = random.Random(0)
    seqs = {tuple(rng.randrange(50) for _ in range(rng.randrange(6))) for _ in range(10**4)}
    assert len({encode_seq(s) for s in seqs}) == len(seqs)
    pairs = {(rng.randrange(10**6), rng.randrange(10**6)) for _ in range(10**4)}
    assert len({encode_pair(*p) for p in pairs}) == len(pairs)
    qs = {F(rng.randrange(-999, 999), rng.randrange(1, 999)) for _ in range(10**4)}
    assert len({encode_rational(q) for q in qs}) == len(qs)


def test_decoders_reject_non_images():
    with pytest.raises(MalformedCode):
        decode_pair(-1)
    with pytest.raises(MalformedCode):
        decode_seq(encode_pair(1, 1))          # body holds no entry
    with pytest.raises(MalformedCode):
        decode_rational(encode_pair(4, 3))     # 2/4 is not reduced


@pytest.mark.parametrize("bad", ["", "1/0", "1.5", "--2", "a/b"])
def test_parse_rational_rejects(bad):
    with pytest.raises(ValueError):
        parse_rational(bad)
