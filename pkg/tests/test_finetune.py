import math
import random
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from conftest import rationals
from msr.cauchy import (DivergentCertified, Meter, Unknown, Value, approx_equiv, c_compatible,
                        const_real, is_cauchy_prefix, real_rep, real_stream)
from msr.finetune import (build_tree, fine_tune_index, fine_tune_trace, fine_tuned_apply,
                          interval_I, live_paths, shift_output, stream_tree)
from msr.numerics import largest_dyadic_below, pow2
from msr.tte import apply, register


def test_interval_examples():
    assert interval_I([0] * 5, 0) == (F(-1, 4), F(1, 4))
    assert interval_I([0, 0, 0, 0, F(1, 3)], 0) == (F(1, 12), F(7, 12))
    with pytest.raises(ValueError):
        interval_I([0] * 4, 0)


@given(rationals(), st.integers(0, 500), st.integers(0, 10))
def test_intervals_nest_and_have_fixed_length(q, seed, n):
    p = real_rep(q, seed=seed).cached(n + 6)
    lo0, hi0 = interval_I(p, n)
    lo1, hi1 = interval_I(p, n + 1)
    assert hi0 - lo0 == pow2(-n - 1)
    assert lo0 <= lo1 and hi1 <= hi0
    assert lo0 <= q <= hi0


def test_tree_of_zero():
    t = build_tree([0] * 6, 1)
    assert sorted(t.live_labels(0)) == [-1, 0]
    assert sorted(t.live_labels(1)) == [F(-1, 2), 0]
    dl, dr = live_paths(build_tree([0] * 12, 6))
    assert dr == [0] * 7
    assert dl == [-pow2(-k) for k in range(7)]


def test_depth_zero_tree_has_two_roots():
    dl, dr = live_paths(build_tree([0] * 5, 0))
    assert (dl, dr) == ([-1], [0])


def test_nondyadic_has_single_path():
    t = build_tree(real_rep(F(1, 3), seed=4).cached(30), 25)
    for ell in range(26):
        assert t.live_labels(ell) == [largest_dyadic_below(F(1, 3), ell).value]
    dl, dr = live_paths(t)
    assert dl == dr


def test_construction_stops_on_non_cauchy_prefix():
    t = build_tree([0, 1, 0, 0, 0, 0, 0, 0], 3)
    assert t.stopped and t.depth < 3


def _labels_by_enumeration(prefix, ell):
    """Level-ell left endpoints whose closed J-interval meets I_ell, by brute force."""
    lo, hi = interval_I(prefix, ell)
    step = pow2(-ell)
    m = math.floor(lo / step) - 2
    out = []
    while m * step <= hi:
        if (m + 1) * step >= lo:
            out.append(m * step)
        m += 1
    return out


def _random_prefix(rng, n):
    if rng.random() < 0.3:
        q = F(rng.randint(-64, 64), 2 ** rng.randint(0, 6))     # dyadic limits
    else:
        q = F(rng.randint(-999, 999), rng.randint(1, 97))
    return q, real_rep(q, seed=rng.randrange(10**6), spread=rng.randint(0, 4)).cached(n)


def test_tree_shape_on_random_prefixes():
    rng = random.Random(2)
    depth = 12
    for _ in range(300):
        q, p = _random_prefix(rng, depth + 5)
        t = build_tree(p, depth)
        assert t.depth == depth and not t.stopped
        for ell in range(depth + 1):
            labels = sorted(n.label for n in t.level(ell))
            assert labels == _labels_by_enumeration(p, ell)
            live = sorted(t.live_labels(ell))
            assert 1 <= len(live) <= 2
            if len(live) == 2:
                assert live[1] - live[0] == pow2(-ell)
            assert all((d * 2 ** ell).denominator == 1 for d in live)
            assert all(abs(d - largest_dyadic_below(q, ell).value) <= pow2(-ell) for d in live)


def test_tree_depends_only_on_its_prefix():
    rng = random.Random(8)
    for _ in range(100):
        _, p = _random_prefix(rng, 20)
        ell = rng.randint(0, 14)
        short = build_tree(p[: ell + 5], ell)
        long = build_tree(p, 15)
        for k in range(ell + 1):
            assert sorted(n.label for n in short.level(k)) == sorted(n.label for n in long.level(k))


@pytest.mark.parametrize("x,n", [(F(0), 0), (F(3, 4), 2), (F(-5, 8), 3), (F(7), 0)])
def test_dyadic_limits_show_both_neighbours(x, n):
    for seed in range(5):
        t = build_tree(real_rep(x, seed=seed).cached(17), 12)
        for ell in range(n, 13):
            assert sorted(t.live_labels(ell)) == [x - pow2(-ell), x]


def test_stream_tree_is_cached_and_charged():
    a = real_rep(F(2, 5), seed=1)
    t1 = stream_tree(a, 4, Meter(100))
    t2 = stream_tree(a, 8, Meter(100))
    assert t1 is t2 and t2.depth == 8


# ------------------------------------------------------------- the wrapper

def test_oracle_independent_machine():
    e = register("(real-const 1/3)")
    for n in range(6):
        assert fine_tuned_apply(e, real_rep(F(5, 7), seed=n), n, 10**5) == Value(F(1, 3))


def test_guard_rejects_disagreeing_paths():
    """first-repeat sees -1 on one path of 0 and 0 on the other, forever."""
    e = register("(first-repeat)")
    zero = real_rep(F(0), seed=3)
    assert isinstance(fine_tuned_apply(e, zero, 2, 3000), Unknown)
    trace = fine_tune_trace(e, zero, 2, 3000)
    assert trace and all(r.case == "b" for r in trace)
    outcomes = {r.outcome for r in trace}
    assert "accept" not in outcomes and "paths disagree" in outcomes
    disagree = next(r for r in trace if r.outcome == "paths disagree")
    assert disagree.r[0] == -1 and disagree.t[0] == 0


def test_guard_accepts_on_single_path():
    e = register("(first-repeat)")
    r = fine_tuned_apply(e, real_rep(F(1, 3), seed=0), 3, 10**5)
    assert r == Value(F(0))          # the unique path starts at 0 = floor(1/3)


def test_zero_fuel_is_unknown():
    assert isinstance(fine_tuned_apply(register("(real-id)"), const_real(1), 0, 0), Unknown)


def test_shift_output_examples():
    c = const_real(F(2, 9))
    assert shift_output(c).cached(4) == [F(2, 9)] * 4
    a = real_stream(lambda n: pow2(-n))
    assert shift_output(a).cached(4) == [pow2(-n - 2) for n in range(4)]


def test_fine_tuned_identity_is_representation_invariant():
    g = fine_tune_index(register("(real-id)"))
    a, b = real_rep(F(1, 3), seed=1), real_rep(F(1, 3), seed=2)
    outs = []
    for x in (a, b):
        outs.append([apply(g, x, n, 10**6).value for n in range(8)])
    for n in range(1, 9):
        assert c_compatible(outs[0][:n], outs[1][:n])
        assert is_cauchy_prefix(outs[0][:n]) and is_cauchy_prefix(outs[1][:n])
    from msr.tte import output_stream
    assert approx_equiv(output_stream(g, a), a, 6, 20) == Value(True)


def test_fine_tuned_machine_on_non_cauchy_oracle():
    bad = real_stream(lambda i: F(i % 2) * 4)
    g = fine_tune_index(register("(real-id)"))
    assert isinstance(apply(g, bad, 0, 10**5), DivergentCertified)


@pytest.mark.parametrize("code", ["(real-id)", "(affine 3 -1)", "(affine -1/2 1/4)",
                                  "(pl ((0 0) (1 1)))", "(real-const 5/3)"])
def test_wrapped_outputs_preserve_cauchy(code):
    g = fine_tune_index(register(code))
    for q in (F(0), F(1, 3), F(-3, 4), F(1)):
        a, b = real_rep(q, seed=11), real_rep(q, seed=12, spread=0)
        oa = [apply(g, a, n, 10**6).value for n in range(8)]
        ob = [apply(g, b, n, 10**6).value for n in range(8)]
        assert is_cauchy_prefix(oa) and is_cauchy_prefix(ob)
        assert all(abs(x - y) < pow2(-n + 1) for n, (x, y) in enumerate(zip(oa, ob)))
