"""Acceptance suite: ten end-to-end criteria, each with a time limit.

Run with pytest, or directly (``python tests/test_acceptance.py``) for the
one-line-per-criterion report alone.
"""

import random
import sys
import time
from fractions import Fraction as F

import pytest

from msr import corpus
from msr.cauchy import (Eventually, Nonzero, Value, Zero, baire_stream, c_compatible, const_real,
                        is_cauchy_prefix, real_rep, zero_test_baire, zero_test_real)
from msr.finetune import build_tree, fine_tune_index
from msr.msvm import parse_program, run
from msr.normalform import T_check, extract_decomposition, nf_run, real_decomposition
from msr.numerics import pow2
from msr.schemes import compile_scheme, evaluate
from msr.sets import (Member, NotMember, Row, SetCode, member, member_delta2_baire,
                      nonzero_open_index, open_decider_program, preparing_sequence)
from msr.tte import apply, interleave


def _point(vals):
    vals = tuple(vals)
    return baire_stream(lambda i: vals[i] if i < len(vals) else 0, Eventually(0, len(vals)))


# ------------------------------------------------------------- 1

def open_decider_trace():
    O = ((5,), (7, 7))
    prog = parse_program(open_decider_program(SetCode("sigma1-baire", O)))
    rng = random.Random(1)
    bad = 0
    for _ in range(100):
        vals = [rng.choice([5, 7, 7, 6, 0]) for _ in range(rng.randint(0, 3))]
        o = run(prog, [], _point(vals))
        want = int(any(tuple(vals[: len(s)]) == s for s in O))
        counts = o.trace.counts()
        bad += not (o.halted and o.output == want and counts["slave"] == 1 and counts["ztest"] == 1)
    return bad == 0, f"{100 - bad}/100 runs with one slave call and one zero test"


# ------------------------------------------------------------- 2

def _prefix(rng, n):
    if rng.random() < 0.3:
        q = F(rng.randint(-64, 64), 2 ** rng.randint(0, 6))
    else:
        q = F(rng.randint(-999, 999), rng.randint(1, 97))
    return q, real_rep(q, seed=rng.randrange(10 ** 6), spread=rng.randint(0, 4)).cached(n)


def tree_invariants():
    rng = random.Random(2)
    depth, bad = 12, []
    for k in range(1000):
        q, p = _prefix(rng, depth + 5)
        t = build_tree(p, depth)
        level = (q.denominator.bit_length() - 1) if q.denominator & (q.denominator - 1) == 0 else None
        for ell in range(depth + 1):
            live = sorted(t.live_labels(ell))
            if not 1 <= len(live) <= 2:
                bad.append((k, ell, "live count"))
            if len(live) == 2 and live[1] - live[0] != pow2(-ell):
                bad.append((k, ell, "gap"))
            if level is not None and ell >= level and live != [q - pow2(-ell), q]:
                bad.append((k, ell, "dyadic labels"))
        # T_alpha up to level ell is read off alpha(0), ..., alpha(ell + 4)
        ell = rng.randint(0, depth)
        short = build_tree(p[: ell + 5], ell)
        if any(sorted(n.label for n in short.level(j)) != sorted(n.label for n in t.level(j))
               for j in range(ell + 1)):
            bad.append((k, ell, "determinism"))
    return not bad, f"1000 prefixes at depth {depth}, violations: {bad[:3] or 'none'}"


# ------------------------------------------------------------- 3

def cauchy_preservation():
    rng = random.Random(3)
    bad = checked = 0
    for e in corpus.functionals():
        g = fine_tune_index(e)
        for _ in range(20):
            q = F(rng.randint(-40, 40), rng.choice([1, 2, 3, 4, 7, 8, 16]))
            reps = [real_rep(q, seed=rng.randrange(10 ** 6), spread=rng.randint(0, 4)) for _ in range(2)]
            outs = [[apply(g, a, n, 10 ** 6) for n in range(11)] for a in reps]
            checked += 1
            if not all(isinstance(r, Value) for o in outs for r in o):
                bad += 1
                continue
            b, b2 = ([r.value for r in o] for o in outs)
            close = all(abs(u - v) < pow2(-n + 1) for n, (u, v) in enumerate(zip(b, b2)))
            bad += not (close and is_cauchy_prefix(b) and is_cauchy_prefix(b2))
    return bad == 0, f"{checked} representation pairs over {len(corpus.functionals())} functionals, {bad} failures"


# ------------------------------------------------------------- 4

def _same_output(a, b):
    if isinstance(a, int):
        return a == b
    return [a.query(i, 10 ** 5) for i in range(4)] == [b.query(i, 10 ** 5) for i in range(4)]


def normal_form_equivalence():
    rng = random.Random(4)
    specs = corpus.program_specs()
    bad = halts = 0
    for spec in specs:
        prog = corpus.program(spec["name"])
        for _ in range(50):
            nats, x = corpus.random_input(spec, rng)
            a, b = run(prog, nats, x, 20_000), nf_run(prog, x, 20_000, nats)
            if a.status != b.status:
                bad += 1
            elif a.halted:
                halts += 1
                ok = T_check(prog, x, b.witness, 20_000, nats)
                bad += not (_same_output(a.output, b.output) and isinstance(ok, Value) and ok.value)
    return bad == 0 and len(specs) >= 15, f"{len(specs)} programs, {halts} halting runs compared, {bad} mismatches"


# ------------------------------------------------------------- 5

def decomposition_disjointness():
    specs = corpus.program_specs()
    split = [s["name"] for s in specs
             if not extract_decomposition(corpus.program(s["name"]), 4000, [1] * s.get("naturals", 0)).pairwise_disjoint()]
    rng = random.Random(5)
    misplaced = 0
    for name in ("tent", "positive"):
        d = real_decomposition(corpus.program(name), 40, budget=7)
        if not d.pairwise_disjoint():
            split.append(name + " (real)")
        for _ in range(20):
            a = corpus.random_real(rng)
            inside = [p for p in d.pieces
                      if isinstance(member(p.o_code, a, 20_000), Member)
                      and isinstance(member(p.c_code, a, 20_000), Member)]
            misplaced += len(inside) != 1
    return not split and not misplaced, \
        f"{len(specs)} programs, overlapping: {split or 'none'}; {misplaced}/40 real samples not in exactly one piece"


# ------------------------------------------------------------- 6

def _random_intervals(rng, n):
    out = []
    for _ in range(n + 1):
        c = F(rng.randint(-40, 40), rng.choice([1, 2, 4, 8]))
        r = F(rng.randint(1, 12), rng.choice([1, 2, 4, 8]))
        out.append((c - r, c + r))
    return out


def _with_midpoints(xs):
    xs = sorted(xs)
    return xs + [(u + v) / 2 for u, v in zip(xs, xs[1:])]


def preparing_laws():
    rng = random.Random(6)
    bad = 0
    for _ in range(200):
        n = rng.randint(0, 12)
        ivs = _random_intervals(rng, n)
        fs = preparing_sequence(ivs, n)
        for k, f in enumerate(fs):
            pts = _with_midpoints({x for a, b in ivs[: k + 1] for x in (a, b)} | set(f.xs))
            bad += any((f(x) != 0) != any(a < x < b for a, b in ivs[: k + 1]) for x in pts)
        for k in range(n):
            pts = _with_midpoints(set(fs[k].xs) | set(fs[k + 1].xs))
            bad += any(abs(fs[k + 1](x) - fs[k](x)) > pow2(-k) for x in pts)
    return bad == 0, f"200 interval lists, {bad} violations"


# ------------------------------------------------------------- 7

def zero_test_soundness():
    rng = random.Random(7)
    bad = starved = 0
    for k in range(10_000):
        kind = k % 4
        if kind == 0:        # certified real, sometimes zero
            q = F(0) if rng.random() < 0.2 else F(rng.randint(-99, 99), rng.randint(1, 64))
            seed = rng.randrange(10 ** 6)
            v = zero_test_real(real_rep(q, seed=seed), 200)
            if isinstance(v, Zero):
                bad += q != 0
            elif isinstance(v, Nonzero):
                fresh = real_rep(q, seed=seed).query(v.witness, 10 ** 6).value
                bad += q == 0 or abs(fresh) < pow2(1 - v.witness)
        elif kind == 1:      # certified constant
            q = F(rng.randint(-5, 5), rng.randint(1, 5))
            v = zero_test_real(const_real(q), 50)
            bad += isinstance(v, Zero) != (q == 0)
            if isinstance(v, Nonzero):
                bad += abs(q) < pow2(1 - v.witness)
        elif kind == 2:      # certified Baire point, eventually zero
            vals = [rng.choice([0, 0, 0, 3]) for _ in range(rng.randint(0, 5))]
            v = zero_test_baire(_point(vals), 200)
            if isinstance(v, Zero):
                bad += any(vals)
            elif isinstance(v, Nonzero):
                bad += not (v.witness < len(vals) and vals[v.witness] != 0)
            else:
                bad += 1
        else:                # uncertified and starved: must stay Unknown
            tiny = F(rng.choice([0, 1]), 2 ** 60)
            x = real_rep(tiny, seed=rng.randrange(10 ** 6), certified=False) if rng.random() < 0.5 \
                else baire_stream(lambda i: 0)
            test = zero_test_real if x.kind == "real" else zero_test_baire
            v = test(x, 30)
            starved += 1
            bad += isinstance(v, (Zero, Nonzero))
    return bad == 0, f"10000 streams ({starved} fuel-starved uncertified), {bad} unsound answers"


# ------------------------------------------------------------- 8

def scheme_vm_agreement():
    rng = random.Random(8)
    bad = compared = 0
    covered = set()
    for spec in corpus.scheme_specs():
        ast = corpus.scheme(spec["name"])
        if spec.get("compiled") is False:
            continue
        prog = parse_program(compile_scheme(ast, spec["name"]))
        covered.add(spec["covers"])
        for _ in range(100):
            nats, pts = corpus.random_arguments(spec, rng)
            a = evaluate(ast, nats, pts, 10 ** 6)
            x = None if not pts else pts[0] if len(pts) == 1 else interleave(*pts)
            b = run(prog, nats, x, 10 ** 6)
            if isinstance(a, Value) and b.halted:
                compared += 1
                bad += not _same_output(a.value, b.output)
    need = {"composition", "primrec", "mu", "lift", "equality", "bounded-sum", "by-cases"}
    return bad == 0 and need <= covered, \
        f"{compared} value pairs compared, {bad} disagreements, missing kinds: {sorted(need - covered) or 'none'}"


# ------------------------------------------------------------- 9

def _cylinder_code(cyls):
    return SetCode("delta2-baire", sigma=tuple(Row("cocylinder", (c,)) for c in cyls),
                   tau=(Row("list", tuple(cyls)),))


def delta2_oracle():
    rng = random.Random(9)
    bad = 0
    for _ in range(500):
        cyls = list({tuple(rng.randint(0, 2) for _ in range(rng.randint(1, 6)))
                     for _ in range(rng.randint(1, 5))})
        code = _cylinder_code(cyls)
        pick = list(rng.choice(cyls))
        for vals in (pick + [rng.randint(0, 2)], [rng.randint(0, 2) for _ in range(7)],
                     pick[:-1] + [(pick[-1] + 1) % 3]):
            padded = tuple(vals) + (0,) * 7
            inside = any(padded[: len(c)] == c for c in cyls)
            ans = member_delta2_baire(code, _point(vals), 10_000)
            bad += not (isinstance(ans, Member) if inside else isinstance(ans, NotMember))
    return bad == 0, f"500 codes x 3 points, {bad} disagreements with the prefix oracle"


# ------------------------------------------------------------- 10

def nonzero_index_soundness():
    rng = random.Random(10)
    bad = intervals = 0
    for e in corpus.functionals(probes_only=True):
        g = fine_tune_index(e)
        code = nonzero_open_index(g, 4)
        for lo, hi in code.intervals():
            intervals += 1
            for _ in range(5):
                q = lo + (hi - lo) * F(rng.randint(1, 99), 100)
                x = real_rep(q, seed=rng.randrange(10 ** 6))
                outs, away = [], False
                for n in range(16):
                    r = apply(g, x, n, 10 ** 6)
                    if not isinstance(r, Value):
                        break
                    outs.append(r.value)
                    if not c_compatible(outs, [F(0)] * len(outs)):
                        away = True
                        break
                bad += not away
    return bad == 0, f"{intervals} intervals x 5 interior points, {bad} without a witness"


# ------------------------------------------------------------- driver

CRITERIA = [
    (1, "open-set decider trace", 1, open_decider_trace),
    (2, "dyadic tree invariants", 10, tree_invariants),
    (3, "fine-tuned Cauchy preservation", 60, cauchy_preservation),
    (4, "normal-form equivalence", 120, normal_form_equivalence),
    (5, "decomposition disjointness", 60, decomposition_disjointness),
    (6, "preparing-function laws", 10, preparing_laws),
    (7, "zero-test soundness", 10, zero_test_soundness),
    (8, "scheme/VM agreement", 60, scheme_vm_agreement),
    (9, "delta-2 oracle equivalence", 30, delta2_oracle),
    (10, "nonzero-index soundness", 120, nonzero_index_soundness),
]


def check(number):
    _, title, limit, fn = CRITERIA[number - 1]
    start = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - start
    passed = ok and elapsed < limit
    line = (f"criterion {number:2d} {title}: {'PASS' if passed else 'FAIL'} "
            f"({elapsed:.1f}s, limit {limit}s; {detail})")
    return passed, line


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"criterion-{c[0]}" for c in CRITERIA])
def test_criterion(number, capsys):
    passed, line = check(number)
    with capsys.disabled():
        print("\n" + line)
    assert passed, line


if __name__ == "__main__":
    results = [check(c[0]) for c in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(p for p, _ in results) else 1)
