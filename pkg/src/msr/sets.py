"""Effective open, closed and Delta^0_2 set codes over Baire space and the
reals, with sound three-valued membership deciders, piecewise-linear
preparing functions and the enumerator of {x : Phi^x(e) != 0}.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, Optional

from .cauchy import (Eventually, Limit, Meter, Nonzero, OutOfFuel, Stream, Unknown,
                     Divergence, BeyondPrefix, Zero, certified_limit, prefix_stream,
                     zero_test_real)
from .numerics import (largest_dyadic_at_most, largest_dyadic_below, parse_rational,
                       format_rational, pow2, rat)
from .sexp import to_sexp
from .tte import (STORE, MalformedFunctional, builtin, _lead, output_stream, resolve)

__all__ = [
    "PiecewiseLinear", "tent", "epsilon_lift", "preparing_function", "preparing_sequence",
    "open_union", "eval_piecewise_linear", "apply_pl_stream", "Member", "NotMember",
    "SetCode", "SetCodeError", "GENERATORS", "generator", "member", "member_open_baire",
    "member_closed_baire", "member_delta2_baire", "member_open_real", "member_closed_real",
    "member_delta2_real", "tree_R_n", "nonzero_open_index", "load_set_code", "dump_set_code",
    "validate_answer", "open_decider_program", "Row",
]


# ------------------------------------------------------------- piecewise linear


class PiecewiseLinear:
    """Continuous piecewise-linear map with constant tails beyond the end breakpoints."""

    def __init__(self, points):
        pts = [(rat(x), rat(y)) for x, y in points]
        if not pts:
            raise ValueError("a piecewise linear function needs a breakpoint")
        for (a, _), (b, _) in zip(pts, pts[1:]):
            if not a < b:
                raise ValueError("breakpoints must be strictly increasing")
        self.points = pts

    def __repr__(self):
        inner = ", ".join(f"({format_rational(x)}, {format_rational(y)})" for x, y in self.points)
        return f"PiecewiseLinear([{inner}])"

    def __eq__(self, other):
        return isinstance(other, PiecewiseLinear) and self.points == other.points

    def __call__(self, q) -> Fraction:
        q = rat(q)
        pts = self.points
        if q <= pts[0][0]:
            return pts[0][1]
        if q >= pts[-1][0]:
            return pts[-1][1]
        lo, hi = 0, len(pts) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if pts[mid][0] <= q:
                lo = mid
            else:
                hi = mid
        (p, r), (s, t) = pts[lo], pts[hi]
        return (t - r) / (s - p) * (q - p) + r

    @property
    def xs(self) -> list:
        return [x for x, _ in self.points]

    @cached_property
    def lipschitz(self) -> Fraction:
        slopes = [abs((t - r) / (s - p)) for (p, r), (s, t) in zip(self.points, self.points[1:])]
        return max(slopes, default=Fraction(0))

    def code(self):
        return ("pl", tuple(self.points))

    def overwrite(self, p, q, inner: "PiecewiseLinear") -> "PiecewiseLinear":
        """self outside [p, q], ``inner`` on [p, q] (values must agree at p and q)."""
        left = [pt for pt in self.points if pt[0] < p]
        right = [pt for pt in self.points if pt[0] > q]
        mid = [(p, inner(p))] + [pt for pt in inner.points if p < pt[0] < q] + [(q, inner(q))]
        return PiecewiseLinear(left + mid + right)


def eval_piecewise_linear(pl: PiecewiseLinear, q) -> Fraction:
    return pl(q)


def tent(p, q) -> PiecewiseLinear:
    """0 outside (p, q), rising linearly to 1/2 at the midpoint."""
    p, q = rat(p), rat(q)
    if not p < q:
        raise ValueError(f"tent needs p < q, got ({p}, {q})")
    return PiecewiseLinear([(p, 0), ((p + q) / 2, Fraction(1, 2)), (q, 0)])


def epsilon_lift(pl: PiecewiseLinear, interval, eps) -> PiecewiseLinear:
    """Raise the breakpoints strictly inside (p, q) by eps; clamp the ends at max(0, pl)."""
    p, q = rat(interval[0]), rat(interval[1])
    eps = rat(eps)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    inner = [(p, max(Fraction(0), pl(p)))]
    inner += [(x, y + eps) for x, y in pl.points if p < x < q]
    inner.append((q, max(Fraction(0), pl(q))))
    return pl.overwrite(p, q, PiecewiseLinear(inner))


def open_union(intervals) -> list[tuple[Fraction, Fraction]]:
    """Merge open intervals into disjoint components (touching ends stay apart)."""
    out: list = []
    for a, b in sorted((rat(a), rat(b)) for a, b in intervals):
        if out and a < out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _inside(p, q, comps) -> bool:
    return any(a <= p and q <= b for a, b in comps)


def _disjoint(p, q, comps) -> bool:
    return all(b <= p or q <= a for a, b in comps)


def preparing_sequence(intervals, n: int) -> list[PiecewiseLinear]:
    """[f_0, ..., f_n] for bounded open intervals I_0, I_1, ..."""
    ivs = [(rat(a), rat(b)) for a, b in intervals]
    if len(ivs) <= n:
        raise ValueError(f"need {n + 1} intervals, got {len(ivs)}")
    for a, b in ivs[: n + 1]:
        if not a < b:
            raise ValueError(f"empty or reversed interval ({a}, {b})")
    fs = [tent(*ivs[0])]
    for k in range(n):
        fs.append(_prep_step(fs[-1], k, ivs[k + 1], open_union(ivs[: k + 1])))
    return fs


def _prep_step(f, k, interval, comps) -> PiecewiseLinear:
    """f_{k+1} from f_k, given I_{k+1} and the components of I_0 u ... u I_k."""
    p, q = interval
    if _inside(p, q, comps):
        return f
    if _disjoint(p, q, comps):
        g = tent(p, q)
        return f.overwrite(p, q, PiecewiseLinear([(x, y * pow2(-k)) for x, y in g.points]))
    return epsilon_lift(f, (p, q), pow2(-k))


def preparing_function(intervals, n: int) -> PiecewiseLinear:
    """f_n, whose nonzero set is the union of I_0..I_n."""
    return preparing_sequence(intervals, n)[-1]


def _validate_pl(code, store):
    try:
        PiecewiseLinear(code[1])
    except (TypeError, ValueError) as exc:
        raise MalformedFunctional(f"bad piecewise linear code: {exc}") from None


_PL_CACHE: dict = {}


def _pl_of(code) -> PiecewiseLinear:
    pl = _PL_CACHE.get(code[1])
    if pl is None:
        pl = _PL_CACHE[code[1]] = PiecewiseLinear(code[1])
    return pl


@builtin("pl", 1, "real", _validate_pl)
def _pl_entry(code, x, i, meter):
    pl = _pl_of(code)
    return pl(x.entry(i + _lead(pl.lipschitz), meter))


@_pl_entry.certifier
def _pl_cert(code, x, meter):
    q = certified_limit(x.certificate)
    return None if q is None else Limit(_pl_of(code)(q))


def apply_pl_stream(pl: PiecewiseLinear, alpha: Stream) -> Stream:
    """(f(alpha(i + k)))_i with 2^k >= 4 * Lip(f), so the result stays fast Cauchy."""
    return output_stream(pl.code(), alpha)


# ------------------------------------------------------------- set codes


class SetCodeError(ValueError):
    pass


@dataclass(frozen=True)
class Member:
    witness: object


@dataclass(frozen=True)
class NotMember:
    evidence: object


KINDS = ("sigma1-baire", "pi1-baire", "delta2-baire", "sigma1-real", "pi1-real", "delta2-real")


@dataclass(frozen=True)
class Row:
    """One closed set of a Delta^0_2 code: the complement of an open set.

    ``form`` is "list" (finite list), "cocylinder" (the closed set is the
    cylinder of ``items[0]``) or "generator" (``items[0]`` names a generator).
    """

    form: str
    items: tuple


@dataclass(frozen=True)
class SetCode:
    kind: str
    items: tuple = ()               # prefixes, or (c, r) pairs, for finite lists
    generator: Optional[str] = None
    sigma: tuple = ()               # Delta^0_2: rows whose closed sets union to A
    tau: tuple = ()                 # Delta^0_2: rows whose closed sets union to the complement

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SetCodeError(f"unknown set kind {self.kind!r}")
        if self.kind.endswith("real"):
            for c, r in self.items:
                if rat(r) <= 0:
                    raise SetCodeError("radii must be positive")
        if len(set(self.items)) != len(self.items):
            raise SetCodeError("finite lists must be duplicate-free")
        if self.generator is not None and self.generator not in GENERATORS:
            raise SetCodeError(f"unknown generator {self.generator!r}")

    @property
    def space(self) -> str:
        return "real" if self.kind.endswith("real") else "baire"

    @property
    def finite(self) -> bool:
        return self.generator is None

    def intervals(self):
        return [(rat(c) - rat(r), rat(c) + rat(r)) for c, r in self.items]


GENERATORS: dict[str, tuple[str, Callable[[int], object]]] = {}


def generator(name: str, space: str):
    """Register a total generator n -> prefix (baire) or n -> (c, r) (real)."""

    def deco(fn):
        GENERATORS[name] = (space, fn)
        return fn

    return deco


def _unpair(n):
    from .numerics import decode_pair
    return decode_pair(n)


@generator("nonzero-somewhere", "baire")
def _gen_nonzero(n):
    k, v = _unpair(n)
    return (0,) * k + (v + 1,)


@generator("head-even", "baire")
def _gen_head_even(n):
    return (2 * n,)


@generator("head-at-least-two", "baire")
def _gen_head_big(n):
    return (n + 2,)


@generator("positive-reals", "real")
def _gen_positive(n):
    lo, hi = pow2(-n), Fraction(n + 2)
    return ((lo + hi) / 2, (hi - lo) / 2)


@generator("everything", "real")
def _gen_everything(n):
    return (Fraction(0), Fraction(n + 1))


@generator("nonzero-reals", "real")
def _gen_nonzero_reals(n):
    c, r = _gen_positive(n // 2)
    return (c if n % 2 == 0 else -c, r)


@generator("off-integers", "real")
def _gen_off_integers(n):
    a, k = _unpair(n)
    m = a // 2 if a % 2 == 0 else -(a + 1) // 2
    lo, hi = m + pow2(-k - 2), m + 1 - pow2(-k - 2)
    return ((lo + hi) / 2, (hi - lo) / 2)


def _gen_item(name, n):
    return GENERATORS[name][1](n)


# ------------------------------------------------------------- baire deciders


def _is_prefix_of(sigma, x: Stream, meter: Meter) -> bool:
    for i, v in enumerate(sigma):
        if x.entry(i, meter) != v:
            return False
    return True


def _check_kind(code: SetCode, *kinds):
    if code.kind not in kinds:
        raise SetCodeError(f"expected a {' or '.join(kinds)} code, got {code.kind}")


def _open_baire(items, gen, x: Stream, fuel: int):
    meter = Meter(fuel)
    try:
        if gen is None:
            for i, sigma in enumerate(items):
                if _is_prefix_of(sigma, x, meter):
                    return Member(i)
            return NotMember(("refuted", len(items)))
        i = 0
        while True:
            meter.charge(1)
            if _is_prefix_of(_gen_item(gen, i), x, meter):
                return Member(i)
            i += 1
    except OutOfFuel:
        return Unknown()
    except Divergence as exc:
        return Unknown(f"oracle diverges: {exc}")


def member_open_baire(code: SetCode, x: Stream, fuel: int):
    """Member(i) iff sigma_i is a prefix of x; NotMember only for refuted finite lists."""
    _check_kind(code, "sigma1-baire")
    return _open_baire(code.items, code.generator, x, fuel)


def _flip(ans):
    if isinstance(ans, Member):
        return NotMember(("in complement", ans.witness))
    if isinstance(ans, NotMember):
        return Member(("outside complement", ans.evidence))
    return ans


def member_closed_baire(code: SetCode, x: Stream, fuel: int):
    _check_kind(code, "pi1-baire")
    return _flip(_open_baire(code.items, code.generator, x, fuel))


def _row_in_closed_baire(row: Row, x: Stream, fuel: int):
    """True/False when x is (not) in the closed set of the row, None if unknown."""
    if row.form == "cocylinder":
        meter = Meter(fuel)
        try:
            return _is_prefix_of(row.items[0], x, meter)
        except (OutOfFuel, Divergence):
            return None
    gen = row.items[0] if row.form == "generator" else None
    ans = _open_baire(row.items if gen is None else (), gen, x, fuel)
    if isinstance(ans, Member):
        return False
    if isinstance(ans, NotMember):
        return True
    return None


def _alternate(code: SetCode, x, fuel: int, row_test):
    rows = []
    for i in range(max(len(code.sigma), len(code.tau))):
        if i < len(code.sigma):
            rows.append(("sigma", i, code.sigma[i]))
        if i < len(code.tau):
            rows.append(("tau", i, code.tau[i]))
    spent = 0
    per_row = max(1, fuel // max(1, len(rows)))
    trials = []
    for side, i, row in rows:
        if spent >= fuel:
            return Unknown("fuel exhausted mid-alternation")
        verdict = row_test(row, x, min(per_row, fuel - spent))
        spent += per_row
        trials.append((side, i, verdict))
        if verdict is True:
            ev = (side, i, tuple(trials))
            return Member(ev) if side == "sigma" else NotMember(ev)
    return Unknown("no closed set confirmed")


def member_delta2_baire(code: SetCode, x: Stream, fuel: int):
    """Try sigma row 0, tau row 0, sigma row 1, ... until a closed set holds x."""
    _check_kind(code, "delta2-baire")
    return _alternate(code, x, fuel, _row_in_closed_baire)


# ------------------------------------------------------------- real deciders

_PREP_CACHE: dict = {}


def _prep_of(items) -> Optional[PiecewiseLinear]:
    key = tuple(items)
    if key not in _PREP_CACHE:
        ivs = [(rat(c) - rat(r), rat(c) + rat(r)) for c, r in items]
        _PREP_CACHE[key] = preparing_function(ivs, len(ivs) - 1) if ivs else None
    return _PREP_CACHE[key]


def _generated_stream(gen: str, alpha: Stream) -> Stream:
    """(f_{i+4}(alpha(j_i)))_i for the preparing functions of a generator."""
    key = ("prep-gen", gen)
    s = alpha.derived.get(key)
    if s is not None:
        return s
    fs: list = []
    ivs: list = []

    def interval(k):
        c, r = _gen_item(gen, k)
        return rat(c) - rat(r), rat(c) + rat(r)

    def f_at(m):
        # grown one step at a time; the union is kept merged as it grows
        if not fs:
            ivs.append(interval(0))
            fs.append(tent(*ivs[0]))
            comps[:] = open_union(ivs)
        while len(fs) <= m:
            k = len(fs) - 1
            nxt = interval(k + 1)
            fs.append(_prep_step(fs[-1], k, nxt, comps))
            ivs.append(nxt)
            comps[:] = open_union(comps + [nxt])
        return fs[m]

    comps: list = []

    def fn(i, meter):
        f = f_at(i + 4)
        meter.charge(len(f.points))
        lip = f.lipschitz
        j = 0
        while pow2(j + 1) < lip * pow2(i + 5):
            j += 1
        return f(alpha.entry(j, meter))

    return alpha.derived.setdefault(key, Stream(fn, "real", None, 1, f"prep({gen})"))


def _open_real(items, gen, alpha: Stream, fuel: int):
    if gen is None:
        pl = _prep_of(items)
        if pl is None:
            return NotMember(("empty union",))
        beta = apply_pl_stream(pl, alpha)
    else:
        beta = _generated_stream(gen, alpha)
    verdict = zero_test_real(beta, fuel)
    if isinstance(verdict, Nonzero):
        return Member(("nonzero", verdict.witness))
    if isinstance(verdict, Zero) and gen is None:
        return NotMember(("zero", verdict.certificate))
    if isinstance(verdict, Unknown):
        return verdict
    return Unknown(getattr(verdict, "reason", "undecided"))


def member_open_real(code: SetCode, alpha: Stream, fuel: int):
    """Zero-test the prepared stream; NotMember only for finite unions."""
    _check_kind(code, "sigma1-real")
    return _open_real(code.items, code.generator, alpha, fuel)


def member_closed_real(code: SetCode, alpha: Stream, fuel: int):
    _check_kind(code, "pi1-real")
    return _flip(_open_real(code.items, code.generator, alpha, fuel))


def _row_in_closed_real(row: Row, alpha: Stream, fuel: int):
    gen = row.items[0] if row.form == "generator" else None
    ans = _open_real(row.items if gen is None else (), gen, alpha, fuel)
    if isinstance(ans, Member):
        return False
    if isinstance(ans, NotMember):
        return True
    return None


def member_delta2_real(code: SetCode, alpha: Stream, fuel: int):
    _check_kind(code, "delta2-real")
    return _alternate(code, alpha, fuel, _row_in_closed_real)


def member(code: SetCode, x: Stream, fuel: int):
    return {
        "sigma1-baire": member_open_baire, "pi1-baire": member_closed_baire,
        "delta2-baire": member_delta2_baire, "sigma1-real": member_open_real,
        "pi1-real": member_closed_real, "delta2-real": member_delta2_real,
    }[code.kind](code, x, fuel)


def validate_answer(code: SetCode, x: Stream, answer) -> bool:
    """Independently re-check the evidence of a Member/NotMember answer."""
    big = Meter(10 ** 9)
    if isinstance(answer, Unknown):
        return True
    kind = code.kind
    if kind in ("sigma1-baire", "pi1-baire"):
        inside = kind == "sigma1-baire"
        if isinstance(answer, Member) == inside:
            i = answer.witness if inside else answer.evidence[1]
            sigma = code.items[i] if code.finite else _gen_item(code.generator, i)
            return all(x.entry(k, big) == v for k, v in enumerate(sigma))
        return code.finite and not any(
            all(x.entry(k, big) == v for k, v in enumerate(s)) for s in code.items)
    if kind in ("sigma1-real", "pi1-real"):
        inside = kind == "sigma1-real"
        hit = answer.witness if isinstance(answer, Member) else answer.evidence
        if not inside:
            hit = hit[1]
        if hit[0] == "nonzero":
            j = hit[1]
            if code.finite:
                beta = apply_pl_stream(_prep_of(code.items), x)
            else:
                beta = _generated_stream(code.generator, x)
            return abs(beta.entry(j, big)) >= pow2(1 - j)
        if hit[0] == "empty union":
            return not code.items
        q = certified_limit(x.certificate)
        return code.finite and q is not None and _prep_of(code.items)(q) == 0
    ev = answer.witness if isinstance(answer, Member) else answer.evidence
    side, i, _ = ev
    if (side == "sigma") != isinstance(answer, Member):
        return False
    row = (code.sigma if side == "sigma" else code.tau)[i]
    test = _row_in_closed_baire if kind == "delta2-baire" else _row_in_closed_real
    return test(row, x, 10 ** 7) is True


# ------------------------------------------------------------- prep functionals


def _validate_prefixes(code, store):
    items = code[1]
    if isinstance(items, str):
        if items not in GENERATORS or GENERATORS[items][0] != "baire":
            raise MalformedFunctional(f"unknown baire generator {items!r}")
        return
    if not isinstance(items, tuple) or not all(
            isinstance(s, tuple) and all(isinstance(v, int) and v >= 0 for v in s) for s in items):
        raise MalformedFunctional("open-prep takes a list of prefixes or a generator name")


def _prefix_at(items, k):
    return _gen_item(items, k) if isinstance(items, str) else items[k]


@builtin("open-prep", 1, "baire", _validate_prefixes)
def _open_prep(code, x, i, meter):
    """1 once some sigma_k with k <= i is seen to be a prefix of x, else 0."""
    items = code[1]
    top = i + 1 if isinstance(items, str) else min(i + 1, len(items))
    for k in range(top):
        if _is_prefix_of(_prefix_at(items, k), x, meter):
            return 1
    return 0


@_open_prep.certifier
def _open_prep_cert(code, x, meter):
    items = code[1]
    if isinstance(items, str):
        return None
    for k, sigma in enumerate(items):
        if _is_prefix_of(sigma, x, meter):
            return Eventually(1, k)
    return Eventually(0, 0)


def _validate_cylinder(code, store):
    t = code[1]
    if not isinstance(t, tuple) or not all(isinstance(v, int) and v >= 0 for v in t):
        raise MalformedFunctional("open-prep-co takes one prefix")


@builtin("open-prep-co", 1, "baire", _validate_cylinder)
def _open_prep_co(code, x, i, meter):
    """Constantly 0 on the cylinder of t, constantly 1 off it."""
    return 0 if _is_prefix_of(code[1], x, meter) else 1


@_open_prep_co.certifier
def _open_prep_co_cert(code, x, meter):
    return Eventually(0 if _is_prefix_of(code[1], x, meter) else 1, 0)


def _row_prep(row: Row):
    if row.form == "cocylinder":
        return ("open-prep-co", tuple(row.items[0]))
    if row.form == "generator":
        return ("open-prep", row.items[0])
    return ("open-prep", tuple(tuple(s) for s in row.items))


def _validate_table(code, store):
    t = code[1]
    if not isinstance(t, tuple) or not all(
            isinstance(p, tuple) and len(p) == 2 and all(isinstance(v, int) and v >= 0 for v in p)
            and p[1] >= 1 for p in t):
        raise MalformedFunctional("stage-check takes ((n stage) ...) with stages >= 1")
    if len({n for n, _ in t}) != len(t):
        raise MalformedFunctional("stage-check table lists a number twice")


def _least_stage(table, n) -> int:
    for m, s in table:
        if m == n:
            return s
    return 0


@builtin("stage-check", 1, "baire", _validate_table)
def _stage_check(code, x, i, meter):
    """1 once some n <= i visibly disagrees with the least-stage function of the table."""
    table = code[1]
    for n in range(i + 1):
        v = x.entry(n, meter)
        s = _least_stage(table, n)
        if v > 0 and v != s:
            return 1
        if v == 0 and 0 < s <= i:
            return 1
    return 0


@_stage_check.certifier
def _stage_check_cert(code, x, meter):
    cert = x.certificate
    if not (isinstance(cert, Eventually) and cert.q == 0):
        return None
    table = code[1]
    top = max([cert.n0] + [n + 1 for n, _ in table])
    for n in range(top):
        if x.entry(n, meter) != _least_stage(table, n):
            return None
    return Eventually(0, 0)


def open_decider_program(code: SetCode) -> str:
    """Master program deciding a sigma1-baire code with one slave call and one zero test."""
    _check_kind(code, "sigma1-baire")
    items = code.generator if code.generator else tuple(tuple(s) for s in code.items)
    fn = to_sexp(("open-prep", items))
    return "\n".join([
        ".name open-set decider",
        ".start qs",
        ".halt qh",
        ".alphabet 0 1 _",
        f".fn 0 {fn}",
        "qs _ 0 S      ; billboard: numeral 0 names the preparing functional",
        "S _ _ E",
        "E _ _ q1",
        "q1 0 1 qh     ; some slave wrote a nonzero entry: x is in the set",
        "q1 1 0 qh",
        "",
    ])


# ------------------------------------------------------------- R_n and nonzero sets


def tree_R_n(n: int, depth: int) -> list[list[tuple]]:
    """Levels 0..depth of R_n; a level-s node is a nondecreasing dyadic tuple of length s+1."""
    levels = [[(Fraction(n),)]]
    for s in range(1, depth + 1):
        step = pow2(-s)
        row = []
        for sigma in levels[-1]:
            row.append(sigma + (sigma[-1],))
            row.append(sigma + (sigma[-1] + step,))
        levels.append(row)
    return levels


def _r_nodes(n: int, s: int):
    """Nodes of R_n of length s, in lexicographic order, generated from their last entry."""
    scale = 1 << (s - 1)
    for m in range(n * scale, (n + 1) * scale):
        v = Fraction(m, scale)
        yield tuple(largest_dyadic_at_most(v, i).value for i in range(s))


def _raw_functional(e):
    """Strip fine-tuning wrappers; the raw machine accepts dyadic-Cauchy paths."""
    code = resolve(e)
    if code[0] == "finetune":
        return _raw_functional(code[1])
    if code[0] in ("smn", "gsharp", "compose"):
        p, c = _raw_functional(code[1]), _raw_functional(code[2])
        if resolve(c)[0] == "identity":
            return p
        return STORE.intern(("compose", p, c))
    return e


def _run_prefix(e, sigma, s: int):
    """Outputs M^sigma(j) for j < s that converge within 2^s steps each."""
    oracle = prefix_stream(list(sigma), "real")
    stream = output_stream(e, oracle)
    out = []
    for j in range(s):
        meter = Meter(1 << s)
        try:
            out.append(rat(stream.entry(j, meter)))
        except (OutOfFuel, BeyondPrefix, Divergence):
            out.append(None)
    return out


def _far_from_zero(r, j: int, s: int) -> bool:
    """<r_0..r_j> is not C-compatible with 0^s."""
    return abs(r) >= pow2(-(j + 1)) + pow2(-s)


def _integers_by_size(bound: int):
    yield 0
    for k in range(1, bound + 1):
        yield -k
        yield k


def nonzero_open_index(e, budget: int, trace: Optional[list] = None) -> SetCode:
    """A finite part of an enumeration of {x : Phi^x(e) != 0} as a sigma1-real code.

    Stages s = 1..budget visit the R_n nodes of length s for |n| <= budget
    (step 2) and the dyadics of level s - 1 (step 3).  A dyadic d is accepted
    only if the left path, the right path and their average all stay away
    from zero.
    """
    raw = _raw_functional(e)
    found: list = []
    seen: set = set()

    def emit(lo, hi, why):
        if (lo, hi) not in seen:
            seen.add((lo, hi))
            found.append(((lo + hi) / 2, (hi - lo) / 2))
            if trace is not None:
                trace.append((lo, hi, why))

    for s in range(1, budget + 1):
        width = pow2(-(s - 1))
        for n in _integers_by_size(budget):
            for sigma in _r_nodes(n, s):
                outs = _run_prefix(raw, sigma, s)
                if any(r is not None and _far_from_zero(r, j, s) for j, r in enumerate(outs)):
                    emit(sigma[-1], sigma[-1] + width, ("node", sigma))
        scale = 1 << (s - 1)
        for m in range(-budget * scale, (budget + 1) * scale + 1):
            d = Fraction(m, scale)
            left = tuple(largest_dyadic_below(d, i).value for i in range(s))
            right = tuple(largest_dyadic_at_most(d, i).value for i in range(s))
            r_out = _run_prefix(raw, left, s)
            t_out = _run_prefix(raw, right, s) if right != left else r_out
            for j in range(s):
                r, t = r_out[j], t_out[j]
                if r is None or t is None:
                    continue
                if all(_far_from_zero(v, j, s) for v in (r, t, (r + t) / 2)):
                    emit(d - pow2(-s), d + pow2(-s), ("dyadic", d))
                    break
    return SetCode("sigma1-real", tuple(found))


# ------------------------------------------------------------- file format


def _parse_prefix(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    vals = []
    for tok in text.split():
        if not tok.isdigit():
            raise SetCodeError(f"prefix entries are naturals, got {tok!r}")
        vals.append(int(tok))
    return tuple(vals)


def _parse_ball(text: str) -> tuple:
    parts = text.split()
    if len(parts) != 2:
        raise SetCodeError(f"expected 'c r', got {text!r}")
    try:
        return parse_rational(parts[0]), parse_rational(parts[1])
    except ValueError as exc:
        raise SetCodeError(str(exc)) from None


def _parse_row(form: str, body: str, real: bool) -> Row:
    if form == "generator":
        name = body.strip()
        if name not in GENERATORS:
            raise SetCodeError(f"unknown generator {name!r}")
        return Row("generator", (name,))
    if form == "cocylinder":
        if real:
            raise SetCodeError("cocylinder rows are for baire codes")
        return Row("cocylinder", (_parse_prefix(body),))
    if form == "list":
        parts = [p for p in body.split("|")] if body.strip() else []
        items = tuple((_parse_ball if real else _parse_prefix)(p) for p in parts)
        return Row("list", items)
    raise SetCodeError(f"unknown row form {form!r}")


def load_set_code(text: str) -> SetCode:
    """Parse the set-code text format.

    ::

        kind sigma1-baire           ; or pi1-/delta2-, -baire/-real
        list: 7 7                   ; one prefix (baire) or 'c r' ball (real) per line
        generator: head-even        ; instead of list lines
        sigma list: 0 1 | 2         ; delta2 rows: sigma/tau + list/cocylinder/generator
        tau cocylinder: 0 1
    """
    kind = None
    items: list = []
    gen = None
    sigma: list = []
    tau: list = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("kind "):
                kind = line[5:].strip()
                if kind not in KINDS:
                    raise SetCodeError(f"unknown kind {kind!r}")
                continue
            if kind is None:
                raise SetCodeError("the first line must be 'kind <kind>'")
            head, sep, body = line.partition(":")
            if not sep:
                raise SetCodeError(f"cannot parse {line!r}")
            words = head.split()
            real = kind.endswith("real")
            if kind.startswith("delta2"):
                if len(words) != 2 or words[0] not in ("sigma", "tau"):
                    raise SetCodeError("delta2 rows look like 'sigma list: ...'")
                (sigma if words[0] == "sigma" else tau).append(_parse_row(words[1], body, real))
            elif words == ["list"]:
                items.append(_parse_ball(body) if real else _parse_prefix(body))
            elif words == ["generator"]:
                gen = body.strip()
                if gen not in GENERATORS:
                    raise SetCodeError(f"unknown generator {gen!r}")
                if GENERATORS[gen][0] != ("real" if real else "baire"):
                    raise SetCodeError(f"generator {gen!r} is for the other space")
            else:
                raise SetCodeError(f"unknown line {line!r}")
        except SetCodeError as exc:
            raise SetCodeError(f"line {lineno}: {exc}") from None
    if kind is None:
        raise SetCodeError("missing 'kind' line")
    if gen is not None and items:
        raise SetCodeError("a code has either list lines or a generator")
    return SetCode(kind, tuple(items), gen, tuple(sigma), tuple(tau))


def _fmt_item(item, real):
    if real:
        return f"{format_rational(item[0])} {format_rational(item[1])}"
    return " ".join(str(v) for v in item)


def dump_set_code(code: SetCode) -> str:
    real = code.space == "real"
    out = [f"kind {code.kind}"]
    if code.generator:
        out.append(f"generator: {code.generator}")
    for item in code.items:
        out.append(f"list: {_fmt_item(item, real)}".rstrip())
    for side, rows in (("sigma", code.sigma), ("tau", code.tau)):
        for row in rows:
            if row.form == "generator":
                body = row.items[0]
            elif row.form == "cocylinder":
                body = _fmt_item(row.items[0], False)
            else:
                body = " | ".join(_fmt_item(i, real) for i in row.items)
            out.append(f"{side} {row.form}: {body}".rstrip())
    return "\n".join(out) + "\n"
