from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from msr import corpus
from msr.cauchy import Eventually, Value, Unknown, baire_stream, const_real, real_stream
from msr.msvm import run
from msr.schemes import (ChiZero, Compose, Const, Mu, PrimRec, Proj, SchemeTypeError, Sig,
                         Succ, Theta, Universal, Zero, absdist, add, bounded_prod, bounded_sum,
                         by_cases, compile_scheme, equality_scheme, evaluate, lift_classical,
                         monus, mu_example, mult, parse_scheme, pred, scheme_text,
                         typecheck)
from msr.tte import STORE


def point(*vals):
    return baire_stream(lambda i, v=vals: v[i] if i < len(v) else 0, Eventually(0, len(vals)))


def nat(ast, *nats, pts=(), fuel=100_000):
    r = evaluate(ast, nats, pts, fuel)
    assert isinstance(r, Value), r
    return r.value


# ------------------------------------------------------------- typecheck

def test_typecheck_examples():
    assert typecheck(Compose(Succ, [Proj(1, 0, 1)], [])) == Sig(1, 0, "Nat")
    with pytest.raises(SchemeTypeError, match="takes"):
        typecheck(Compose(ChiZero("baire"), [Zero], []))
    with pytest.raises(SchemeTypeError, match="expected Point, got Nat"):
        typecheck(Compose(ChiZero("baire"), [], [Zero]))
    assert typecheck(equality_scheme()) == Sig(0, 2, "Nat")
    assert typecheck(equality_scheme("real")) == Sig(0, 2, "Nat")


@pytest.mark.parametrize("bad,where", [
    (Compose(Succ, [Proj(1, 0, 1), Proj(1, 0, 1)]), "root"),
    (Compose(add, [Proj(1, 0, 1), Proj(2, 0, 1)]), "root.g2"),
    (Proj(1, 0, 2), "root"),
    (PrimRec(Proj(1, 0, 1), Succ), "root.H"),
    (Mu(Proj(0, 1, 1)), "root.G"),
    (Compose(Succ, []), "root"),
])
def test_typecheck_errors_name_the_node(bad, where):
    with pytest.raises(SchemeTypeError, match=where.replace(".", r"\.")):
        typecheck(bad)


def test_domains_cannot_mix():
    mixed = Compose(add, [Compose(ChiZero("baire"), [], [Proj(0, 2, 1)]),
                          Compose(ChiZero("real"), [], [Proj(0, 2, 2)])])
    with pytest.raises(SchemeTypeError, match="mixes"):
        typecheck(mixed)


def test_primitive_flag():
    assert typecheck(add, primitive=True) == Sig(2, 0, "Nat")
    assert typecheck(Compose(Theta(), [Const(1, 0, 1)], [Proj(0, 1, 1)]), primitive=True).sort == "Point"
    with pytest.raises(SchemeTypeError, match="primitive"):
        typecheck(mu_example, primitive=True)
    with pytest.raises(SchemeTypeError, match="Theta"):
        typecheck(lift_classical("succ"), primitive=True)


# ------------------------------------------------------------- evaluate

def test_eval_examples():
    assert nat(add, 2, 3) == 5
    assert nat(mu_example) == 2
    assert nat(ChiZero("real"), pts=(const_real(0),)) == 1


def test_arithmetic():
    assert nat(mult, 4, 3) == 12
    assert nat(pred, 0) == 0 and nat(pred, 7) == 6
    assert nat(monus, 5, 3) == 0 and nat(monus, 3, 5) == 2
    assert nat(absdist, 2, 7) == 5 and nat(absdist, 7, 2) == 5


def test_argument_count_is_checked():
    with pytest.raises(ValueError):
        evaluate(add, (1,))


def test_chi_zero():
    assert nat(ChiZero(), pts=(point(),)) == 1
    assert nat(ChiZero(), pts=(point(0, 0, 4),)) == 0
    assert isinstance(evaluate(ChiZero(), (), (baire_stream(lambda i: 0),), 500), Unknown)
    tiny = real_stream(lambda i: F(1, 2 ** (i + 3)))
    assert isinstance(evaluate(ChiZero("real"), (), (tiny,), 500), Unknown)


def test_unregistered_universal_diverges():
    r = evaluate(Universal(), (10 ** 9,), (point(1),))
    assert type(r).__name__ == "DivergentCertified"


def test_mu_runs_out_of_fuel_without_a_root():
    never = Mu(Compose(Succ, [Proj(1, 0, 1)]))
    assert isinstance(evaluate(never, (), (), 2000), Unknown)


def test_mu_propagates_unknown():
    g = Compose(ChiZero(), [], [Proj(1, 1, 2)])        # G(k, x) = chi(x), undecided on uncertified zeros
    assert isinstance(evaluate(Mu(g), (), (baire_stream(lambda i: 0),), 2000), Unknown)


# ------------------------------------------------------------- lifts

def _entries(stream, n):
    return [stream.query(i, 10_000).value for i in range(n)]


def test_lift_examples():
    assert _entries(nat(lift_classical("exp2"), pts=(baire_stream(lambda i: i),)), 5) == [1, 2, 4, 8, 16]
    x = point(5, 0, 3)
    assert _entries(nat(lift_classical("id"), pts=(x,)), 4) == [5, 0, 3, 0]
    assert _entries(nat(lift_classical("pred"), pts=(x,)), 3) == [4, 0, 2]


@given(st.lists(st.integers(0, 30), min_size=1, max_size=8))
def test_lift_commutes(vals):
    x = point(*vals)
    for name, f in (("succ", lambda n: n + 1), ("pred", lambda n: max(n - 1, 0)),
                    ("double", lambda n: 2 * n), ("exp2", lambda n: 2 ** n)):
        out = nat(lift_classical(name), pts=(x,))
        assert _entries(out, len(vals) + 1) == [f(v) for v in list(vals) + [0]]


# ------------------------------------------------------------- derived combinators

def test_equality():
    x = point(3, 1, 4)
    assert nat(equality_scheme(), pts=(x, x)) == 1
    assert nat(equality_scheme(), pts=(x, point(3, 1, 5))) == 0
    assert nat(equality_scheme("real"), pts=(const_real(F(1, 3)), const_real(F(1, 3)))) == 1
    assert nat(equality_scheme("real"), pts=(const_real(F(1, 3)), const_real(F(1, 2)))) == 0


def test_bounded_sum_and_product():
    ident = Proj(1, 0, 1)
    assert nat(bounded_sum(ident), 3) == 6
    assert nat(bounded_prod(Compose(Succ, [ident])), 3) == 24      # 1*2*3*4
    with pytest.raises(SchemeTypeError):
        bounded_sum(Proj(0, 1, 1))


def test_bounded_sum_with_a_point():
    # f(i, x) = chi(x) + i
    f = Compose(add, [Proj(1, 1, 1), Compose(ChiZero(), [], [Proj(1, 1, 2)])])
    assert nat(bounded_sum(f), 2, pts=(point(),)) == 1 * 3 + 0 + 1 + 2
    assert nat(bounded_sum(f), 2, pts=(point(9),)) == 3


def test_by_cases():
    P = Compose(ChiZero(), [], [Proj(0, 1, 1)])
    Q = Compose(monus, [P, Const(1, 0, 1)])
    f1, f2 = Const(7, 0, 1), Const(9, 0, 1)
    s = by_cases(f1, f2, P, Q)
    assert nat(s, pts=(point(0),)) == 7
    assert nat(s, pts=(point(0, 4),)) == 9


@given(st.lists(st.integers(0, 3), max_size=4))
def test_case_predicates_are_exclusive(vals):
    s = corpus.scheme("cases")
    x = point(*vals)
    P, Q = s.gs[0].gs[0], s.gs[1].gs[0]
    assert nat(P, pts=(x,)) + nat(Q, pts=(x,)) == 1


# ------------------------------------------------------------- properties

@given(st.integers(0, 6), st.integers(0, 6))
def test_mu_soundness(a, b):
    # least k with |k - (a + b)| = 0
    G = Compose(absdist, [Proj(3, 0, 1), Compose(add, [Proj(3, 0, 2), Proj(3, 0, 3)])])
    k = nat(Mu(G), a, b)
    assert nat(G, k, a, b) == 0
    assert all(nat(G, j, a, b) != 0 for j in range(k))


NAT_SCHEMES = [Proj(1, 0, 1), Compose(Succ, [Proj(1, 0, 1)]), Const(2, 1, 0)]
STEP_SCHEMES = [Compose(Succ, [Proj(3, 0, 3)]), Compose(add, [Proj(3, 0, 1), Proj(3, 0, 3)]),
                Compose(monus, [Proj(3, 0, 2), Proj(3, 0, 3)]), Proj(3, 0, 1)]


@given(st.sampled_from(NAT_SCHEMES), st.sampled_from(STEP_SCHEMES), st.integers(0, 8), st.integers(0, 5))
def test_primrec_unrolls(G, H, k, n):
    acc = nat(G, n)
    for i in range(k):
        acc = nat(H, i, n, acc)
    assert nat(PrimRec(G, H), k, n) == acc


# ------------------------------------------------------------- compile

def test_compiled_universal_copies_the_index():
    e = STORE.intern(("lift", "succ"))
    o = run(compile_scheme(Universal()), [e], point(4, 1), 10_000)
    assert o.status == "halt"
    counts = o.trace.counts()
    assert counts["slave"] == 1 and counts["ztest"] == 0
    call = next(r for r in o.trace.steps if r.kind == "slave")
    assert call.config.snap.numeral() == e
    assert [o.output.query(i, 1000).value for i in range(3)] == [5, 2, 1]


def test_compiled_chi_zero_is_one_zero_test():
    prog = compile_scheme(ChiZero())
    for x, want in ((point(), 1), (point(0, 2), 0)):
        o = run(prog, [], x)
        assert o.output == want
        assert o.trace.counts()["ztest"] == 1 and o.trace.counts()["slave"] == 0


def test_compiled_add():
    o = run(compile_scheme(add), [2, 3], None, 100_000)
    assert o.status == "halt" and o.output == 5


@given(st.integers(0, 4), st.integers(0, 4))
def test_compiled_arithmetic_matches_evaluation(a, b):
    for s in (add, monus, absdist):
        o = run(compile_scheme(s), [a, b], None, 200_000)
        assert o.status == "halt" and o.output == nat(s, a, b)


def test_compile_rejects_real_schemes():
    from msr.schemes import CompileError
    with pytest.raises(CompileError):
        compile_scheme(equality_scheme("real"))


# ------------------------------------------------------------- text format

def test_text_round_trip():
    for spec in corpus.scheme_specs():
        s = corpus.scheme(spec["name"])
        assert parse_scheme(scheme_text(s)) == s
        typecheck(s)


def test_text_sugar():
    assert parse_scheme("(add)") == add
    assert parse_scheme("(compose (succ) ((proj 1 0 1)) ())") == Compose(Succ, [Proj(1, 0, 1)])
    with pytest.raises(SchemeTypeError, match="unbalanced"):
        parse_scheme("(compose (succ)")
