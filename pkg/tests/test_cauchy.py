import random
import threading
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from conftest import rationals
from msr.cauchy import (HASH, BeyondPrefix, Divergence, DivergentCertified, Eventually, Limit, Nonzero,
                        StreamFormatError, Unknown, Value, Zero, approx_equiv, baire_stream,
                        c_compatible, const_real, dump_stream, enclosure, is_cauchy_prefix,
                        load_stream, make_hash_extension, nonhash_prefix, prefix_stream,
                        real_rep, real_stream, Stream, zero_test_baire, zero_test_real)
from msr.numerics import pow2


def test_is_cauchy_prefix_examples():
    assert is_cauchy_prefix([0, F(1, 4), F(1, 8)])
    assert not is_cauchy_prefix([0, 1])
    assert is_cauchy_prefix([F(17, 3)])
    assert is_cauchy_prefix([])


def test_c_compatible_examples():
    assert c_compatible([0, 0], [F(3, 8)])
    assert not c_compatible([0], [2])
    assert c_compatible([F(5, 7)], [F(5, 7)])
    with pytest.raises(ValueError):
        c_compatible([], [1])


@given(rationals(), st.integers(0, 2**16), st.integers(0, 2**16), st.integers(1, 12), st.integers(1, 12))
def test_representations_of_one_rational_are_compatible(q, s1, s2, n, m):
    a, b = real_rep(q, seed=s1), real_rep(q, seed=s2)
    sa, sb = a.cached(n), b.cached(m)
    assert is_cauchy_prefix(sa) and is_cauchy_prefix(sb)
    assert c_compatible(sa, sb)


def test_enclosure_examples():
    q = F(2, 3)
    assert enclosure(const_real(q), 2, 10) == Value((q - F(1, 8), q + F(1, 8)))
    geo = real_stream(lambda j: pow2(-j - 2))
    assert enclosure(geo, 0, 10) == Value((F(-1, 4), F(3, 4)))
    costly = Stream(lambda i, m: 0, "real", cost=50)
    assert isinstance(enclosure(costly, 0, 0), Unknown)


@given(rationals(), st.integers(0, 1000), st.integers(0, 20))
def test_enclosure_contains_limit(q, seed, n):
    r = enclosure(real_rep(q, seed=seed), n, 100)
    lo, hi = r.value
    assert lo <= q <= hi and hi - lo == pow2(-n)


def test_zero_test_real_examples():
    geo = lambda cert: real_stream(lambda j: pow2(-j - 2), cert)
    assert isinstance(zero_test_real(geo(Limit(F(0))), 100), Zero)
    assert zero_test_real(const_real(1), 100) == Nonzero(1)
    assert isinstance(zero_test_real(geo(None), 500), Unknown)


def test_zero_test_baire_examples():
    assert isinstance(zero_test_baire(baire_stream(lambda i: 0, Eventually(0, 0)), 10), Zero)
    x = baire_stream(lambda i: 7 if i == 3 else 0)
    assert zero_test_baire(x, 100) == Nonzero(3)
    assert isinstance(zero_test_baire(baire_stream(lambda i: 0), 100), Unknown)


def test_zero_test_baire_checks_below_certificate():
    x = baire_stream(lambda i: 1 if i == 2 else 0, Eventually(0, 5))
    assert zero_test_baire(x, 100) == Nonzero(2)


def _random_certified_stream(rng):
    q = F(rng.randint(-50, 50), rng.randint(1, 64))
    if rng.random() < 0.3:
        q = F(0)
    return q, real_rep(q, seed=rng.randrange(10**6), certified=True)


def test_zero_test_soundness_on_random_streams():
    rng = random.Random(7)
    for _ in range(1000):
        q, a = _random_certified_stream(rng)
        v = zero_test_real(a, rng.randint(0, 40))
        if q != 0:
            assert not isinstance(v, Zero)
        if isinstance(v, Nonzero):
            assert abs(a.cached(v.witness + 1)[v.witness]) >= pow2(1 - v.witness)
            assert q != 0


def test_approx_equiv_examples():
    a = real_rep(F(1, 3), seed=1, certified=False)
    assert approx_equiv(a, a, 4, 10) == Value(True)
    assert approx_equiv(const_real(0), const_real(1), 3, 5) == Value(False)
    b = real_rep(F(1, 3), seed=2, certified=False)
    assert approx_equiv(a, b, 5, 3) == Value(True)


def test_approx_equiv_is_unknown_without_certificates():
    a = real_stream(lambda j: F(0))
    b = real_stream(lambda j: F(1))
    assert isinstance(approx_equiv(a, b, 3, 5), Unknown)


def test_hash_extension_examples():
    x = baire_stream(lambda i: 5 + i)
    same = make_hash_extension(x, baire_stream(lambda i: 0))
    assert same.cached(4) == [5, 6, 7, 8]
    padded = make_hash_extension(x, baire_stream(lambda i: 2 if i == 0 else 0))
    assert padded.cached(4) == [HASH, HASH, 5, 6]
    assert nonhash_prefix([HASH, HASH, 5, HASH, 6]) == [5, 6]


def test_fuel_monotone_and_deterministic():
    rng = random.Random(3)
    streams = [real_rep(F(rng.randint(-9, 9), 7), seed=i) for i in range(20)]
    streams.append(Stream(lambda i, m: (m.charge(i), i)[1], "baire"))
    for s in streams:
        for i in range(8):
            first = None
            for fuel in range(0, 30):
                r = s.query(i, fuel)
                if first is None and isinstance(r, Value):
                    first = r
                elif first is not None:
                    assert r == first


def test_divergence_is_stable():
    def fn(i, m):
        raise Divergence("loops")
    s = Stream(fn, "baire")
    assert isinstance(s.query(0, 10), DivergentCertified)
    assert isinstance(s.query(0, 10**6), DivergentCertified)


def test_memo_consistent_under_threads():
    calls = []
    s = Stream(lambda i, m: calls.append(i) or i * i, "baire")
    threads = [threading.Thread(target=lambda: [s.query(i, 10) for i in range(50)]) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(calls) == list(range(50))


def test_prefix_stream_refuses_past_end():
    s = prefix_stream([0, F(1, 4)])
    assert s.cached(2) == [0, F(1, 4)]
    with pytest.raises(BeyondPrefix):
        s.query(2, 10)


# ------------------------------------------------------------- file format

def test_stream_file_round_trip():
    text = "real\ncert limit 1/3\n0 1/4\n1 3/8\n"
    s = load_stream(text)
    assert s.limit == F(1, 3)
    assert s.cached(3) == [F(1, 4), F(3, 8), F(1, 3)]
    again = load_stream(dump_stream(s, 3))
    assert again.cached(5) == s.cached(5) and again.limit == s.limit


def test_stream_file_eventually_and_hash():
    s = load_stream("baire\ncert eventually 0 2\n0 7\n1 5\n")
    assert s.cached(4) == [7, 5, 0, 0]
    h = load_stream("baire\ncert eventually # 1\n0 3\n")
    assert h.kind == "hash" and h.cached(3) == [3, HASH, HASH]


@pytest.mark.parametrize("text", [
    "complex\n",
    "real\n0 1\n",                          # nothing says what entry 1 is
    "baire\ncert eventually 0 3\n0 1\n",    # entries 1 and 2 missing
    "real\ncert limit 0\n0 1\n",            # too far from the limit
    "real\ncert limit 0\n0 0\n1 1\n",       # not fast Cauchy
    "baire\ncert eventually 0 0\n0 1/2\n",
    "baire\ncert eventually 0 0\n0 1\n",    # contradicts the certificate
])
def test_stream_file_rejects(text):
    with pytest.raises(StreamFormatError):
        load_stream(text)
