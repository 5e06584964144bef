"""Partial recursive schemes over Baire space and the reals.

Schemes are immutable ASTs.  ``eval`` interprets them directly; ``compile``
turns a Baire scheme into a master program.  The compiled master keeps its
naturals in unary registers and every point value it still needs on a stack
of streams held by the slaves (see the ``st-*`` functionals in ``tte``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .cauchy import (DivergentCertified, Meter, Nonzero, OutOfFuel, Unknown, Value,
                     Zero as ZeroVerdict, zero_test_baire, zero_test_real)
from .finetune import fine_tune_index
from .sexp import SexpError, parse_sexp, to_sexp
from .tte import STORE, MalformedFunctional, interleave, output_stream

__all__ = [
    "Zero", "Succ", "Proj", "Universal", "ChiZero", "Theta", "Compose", "PrimRec", "Mu",
    "Const", "Code", "Sig", "SchemeTypeError", "CompileError", "typecheck", "evaluate",
    "compile_scheme", "lift_classical", "equality_scheme", "bounded_sum", "bounded_prod",
    "by_cases", "add", "mult", "pred", "monus", "absdist", "mu_example", "parse_scheme",
    "scheme_text", "THETA",
]


# ------------------------------------------------------------- the AST


@dataclass(frozen=True)
class ZeroFn:
    pass


@dataclass(frozen=True)
class SuccFn:
    pass


Zero = ZeroFn()
Succ = SuccFn()


@dataclass(frozen=True)
class Proj:
    p: int
    q: int
    i: int          # 1-based over naturals then points


@dataclass(frozen=True)
class Universal:
    domain: str = "baire"
    q: int = 1


@dataclass(frozen=True)
class ChiZero:
    domain: str = "baire"


@dataclass(frozen=True)
class Theta:
    """The fixed list of total functionals allowed in the primitive fragment."""
    domain: str = "baire"


@dataclass(frozen=True)
class Compose:
    f: object
    gs: tuple = ()
    hs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "gs", tuple(self.gs))
        object.__setattr__(self, "hs", tuple(self.hs))


@dataclass(frozen=True)
class PrimRec:
    G: object
    H: object


@dataclass(frozen=True)
class Mu:
    G: object


@dataclass(frozen=True)
class Const:
    k: int
    p: int = 0
    q: int = 0


@dataclass(frozen=True)
class Code:
    """The natural naming a registered functional code."""
    code: object
    p: int = 0
    q: int = 0

    @property
    def handle(self) -> int:
        return STORE.intern(self.code)


THETA = (("identity",), ("lift", "succ"), ("lift", "pred"), ("lift", "double"),
         ("lift", "half"), ("lift", "sgn"), ("lift", "nsgn"), ("lift", "mod2"), ("shift", 1))


@dataclass(frozen=True)
class Sig:
    p: int
    q: int
    sort: str       # "Nat" or "Point"


class SchemeTypeError(TypeError):
    pass


class CompileError(ValueError):
    pass


# ------------------------------------------------------------- typing


def _domains(ast, acc: set):
    if isinstance(ast, (Universal, ChiZero, Theta)):
        acc.add(ast.domain)
    elif isinstance(ast, Compose):
        for sub in (ast.f,) + ast.gs + ast.hs:
            _domains(sub, acc)
    elif isinstance(ast, PrimRec):
        _domains(ast.G, acc)
        _domains(ast.H, acc)
    elif isinstance(ast, Mu):
        _domains(ast.G, acc)
    return acc


def typecheck(ast, primitive: bool = False) -> Sig:
    """Signature of a scheme; SchemeTypeError names the offending node path."""
    doms = _domains(ast, set())
    if len(doms) > 1:
        raise SchemeTypeError(f"mixes point domains {sorted(doms)}")
    return _sig(ast, primitive, "root")


def _sig(ast, primitive, path) -> Sig:
    if ast is Zero or ast is Succ:
        return Sig(0, 0, "Nat") if ast is Zero else Sig(1, 0, "Nat")
    if isinstance(ast, Proj):
        if not (ast.p >= 0 and ast.q >= 0 and 1 <= ast.i <= ast.p + ast.q):
            raise SchemeTypeError(f"{path}: projection index {ast.i} outside 1..{ast.p + ast.q}")
        return Sig(ast.p, ast.q, "Nat" if ast.i <= ast.p else "Point")
    if isinstance(ast, (Const, Code)):
        if isinstance(ast, Const) and ast.k < 0:
            raise SchemeTypeError(f"{path}: constants are naturals")
        if isinstance(ast, Code):
            try:
                ast.handle
            except MalformedFunctional as exc:
                raise SchemeTypeError(f"{path}: {exc}") from None
        return Sig(ast.p, ast.q, "Nat")
    if isinstance(ast, Universal):
        if primitive:
            raise SchemeTypeError(f"{path}: the primitive fragment only allows Theta")
        if ast.q < 1:
            raise SchemeTypeError(f"{path}: Universal needs a point argument")
        return Sig(1, ast.q, "Point")
    if isinstance(ast, Theta):
        return Sig(1, 1, "Point")
    if isinstance(ast, ChiZero):
        return Sig(0, 1, "Nat")
    if isinstance(ast, Compose):
        f = _sig(ast.f, primitive, path + ".f")
        if len(ast.gs) != f.p or len(ast.hs) != f.q:
            raise SchemeTypeError(f"{path}: f takes ({f.p},{f.q}) arguments, "
                                  f"got ({len(ast.gs)},{len(ast.hs)})")
        subs = [(_sig(g, primitive, f"{path}.g{k + 1}"), "Nat", f"g{k + 1}") for k, g in enumerate(ast.gs)]
        subs += [(_sig(h, primitive, f"{path}.h{k + 1}"), "Point", f"h{k + 1}") for k, h in enumerate(ast.hs)]
        if not subs:
            raise SchemeTypeError(f"{path}: composition needs an argument (use Const)")
        p, q = subs[0][0].p, subs[0][0].q
        for s, want, name in subs:
            if s.sort != want:
                raise SchemeTypeError(f"{path}.{name}: expected {want}, got {s.sort}")
            if (s.p, s.q) != (p, q):
                raise SchemeTypeError(f"{path}.{name}: arity ({s.p},{s.q}) differs from ({p},{q})")
        return Sig(p, q, f.sort)
    if isinstance(ast, PrimRec):
        g = _sig(ast.G, primitive, path + ".G")
        h = _sig(ast.H, primitive, path + ".H")
        if g.sort == "Nat":
            want = Sig(g.p + 2, g.q, "Nat")
        else:
            want = Sig(g.p + 1, g.q + 1, "Point")
        if h != want:
            raise SchemeTypeError(f"{path}.H: expected ({want.p},{want.q},{want.sort}), "
                                  f"got ({h.p},{h.q},{h.sort})")
        return Sig(g.p + 1, g.q, g.sort)
    if isinstance(ast, Mu):
        if primitive:
            raise SchemeTypeError(f"{path}: Mu is outside the primitive fragment")
        g = _sig(ast.G, primitive, path + ".G")
        if g.sort != "Nat" or g.p < 1:
            raise SchemeTypeError(f"{path}.G: Mu needs a Nat-valued G with a natural argument")
        return Sig(g.p - 1, g.q, "Nat")
    raise SchemeTypeError(f"{path}: not a scheme node: {ast!r}")


# ------------------------------------------------------------- evaluation


class _Undefined(Exception):
    def __init__(self, result):
        super().__init__(str(result))
        self.result = result


def evaluate(ast, nats=(), points=(), fuel: int = 100_000):
    """Value(natural or Stream), Unknown, or DivergentCertified."""
    sig = typecheck(ast)
    nats, points = tuple(nats), tuple(points)
    if (len(nats), len(points)) != (sig.p, sig.q):
        raise ValueError(f"scheme takes ({sig.p},{sig.q}) arguments, got ({len(nats)},{len(points)})")
    meter = Meter(fuel)
    try:
        return Value(_ev(ast, nats, points, meter))
    except _Undefined as exc:
        return exc.result
    except OutOfFuel:
        return Unknown("fuel exhausted")


def _ev(ast, nats, pts, meter):
    meter.charge(1)
    if ast is Zero:
        return 0
    if ast is Succ:
        return nats[0] + 1
    if isinstance(ast, Proj):
        return nats[ast.i - 1] if ast.i <= ast.p else pts[ast.i - ast.p - 1]
    if isinstance(ast, Const):
        return ast.k
    if isinstance(ast, Code):
        return ast.handle
    if isinstance(ast, Universal):
        e = nats[0]
        if not 0 <= e < len(STORE):
            raise _Undefined(DivergentCertified(f"{e} names no registered functional"))
        x = pts[0] if ast.q == 1 else interleave(*pts)
        if ast.domain == "real" and ast.q == 1:
            e = fine_tune_index(e)
        return output_stream(e, x)
    if isinstance(ast, Theta):
        return output_stream(THETA[nats[0] % len(THETA)], pts[0])
    if isinstance(ast, ChiZero):
        test = zero_test_real if ast.domain == "real" else zero_test_baire
        verdict = test(pts[0], max(0, meter.remaining))
        if isinstance(verdict, ZeroVerdict):
            return 1
        if isinstance(verdict, Nonzero):
            meter.charge(verdict.witness + 1 if isinstance(verdict.witness, int) else 1)
            return 0
        if isinstance(verdict, DivergentCertified):
            raise _Undefined(verdict)
        raise _Undefined(Unknown("zero test undecided"))
    if isinstance(ast, Compose):
        gv = tuple(_ev(g, nats, pts, meter) for g in ast.gs)
        hv = tuple(_ev(h, nats, pts, meter) for h in ast.hs)
        return _ev(ast.f, gv, hv, meter)
    if isinstance(ast, PrimRec):
        k, rest = nats[0], nats[1:]
        acc = _ev(ast.G, rest, pts, meter)
        point = not isinstance(acc, int)
        for i in range(k):
            if point:
                acc = _ev(ast.H, (i,) + rest, pts + (acc,), meter)
            else:
                acc = _ev(ast.H, (i,) + rest + (acc,), pts, meter)
        return acc
    if isinstance(ast, Mu):
        k = 0
        while True:
            if _ev(ast.G, (k,) + nats, pts, meter) == 0:
                return k
            k += 1
    raise SchemeTypeError(f"not a scheme node: {ast!r}")


# ------------------------------------------------------------- derived schemes


def _proj_nat(p, q, i):
    return Proj(p, q, i)


add = PrimRec(Proj(1, 0, 1), Compose(Succ, [Proj(3, 0, 3)]))                   # add(k, n) = n + k
mult = PrimRec(Const(0, 1, 0), Compose(add, [Proj(3, 0, 2), Proj(3, 0, 3)]))   # k * n
pred = PrimRec(Const(0, 0, 0), Proj(2, 0, 1))
monus = PrimRec(Proj(1, 0, 1), Compose(pred, [Proj(3, 0, 3)]))                 # monus(k, n) = n - k, cut off
absdist = Compose(add, [Compose(monus, [Proj(2, 0, 1), Proj(2, 0, 2)]),
                        Compose(monus, [Proj(2, 0, 2), Proj(2, 0, 1)])])
mu_example = Mu(Compose(absdist, [Proj(1, 0, 1), Const(2, 1, 0)]))              # least k with |k - 2| = 0


def lift_classical(f) -> Compose:
    """Point-to-point scheme applying the classical function f entrywise."""
    return Compose(Universal("baire", 1), [Code(("lift", f), 0, 1)], [Proj(0, 1, 1)])


def equality_scheme(domain: str = "baire") -> Compose:
    """1 when the two points are equal: a zero test of their pointwise distance."""
    diff = ("absdiff",) if domain == "baire" else ("real-absdiff",)
    dist = Compose(Universal(domain, 2), [Code(diff, 0, 2)], [Proj(0, 2, 1), Proj(0, 2, 2)])
    return Compose(ChiZero(domain), [], [dist])


def _fold(f, op, start_from_f: bool):
    s = typecheck(f)
    if s.sort != "Nat" or s.p < 1:
        raise SchemeTypeError("bounded sums and products need a Nat scheme with a leading natural")
    p, q = s.p - 1, s.q
    rest = [Proj(p, q, j) for j in range(1, p + 1)]
    pts = [Proj(p, q, p + j) for j in range(1, q + 1)]
    G = Compose(f, [Const(0, p, q)] + rest, pts)
    P = p + 2
    at_next = Compose(f, [Compose(Succ, [Proj(P, q, 1)])] + [Proj(P, q, 1 + j) for j in range(1, p + 1)],
                      [Proj(P, q, P + j) for j in range(1, q + 1)])
    H = Compose(op, [Proj(P, q, P), at_next])
    return PrimRec(G, H)


def bounded_sum(f) -> PrimRec:
    """(n, m..., x...) -> sum of f(i, m..., x...) over i <= n."""
    return _fold(f, add, True)


def bounded_prod(f) -> PrimRec:
    """(n, m..., x...) -> product of f(i, m..., x...) over i <= n."""
    return _fold(f, mult, True)


def by_cases(f1, f2, P, Q) -> Compose:
    """f1 where P holds, f2 where Q holds (P and Q are exclusive 0/1 predicates)."""
    return Compose(add, [Compose(mult, [P, f1]), Compose(mult, [Q, f2])])


# ------------------------------------------------------------- text format
#
#   (zero) (succ) (proj p q i) (const k p q) (code <functional> p q)
#   (universal baire|real q) (chi baire|real) (theta baire|real)
#   (compose f (g ...) (h ...)) (primrec G H) (mu G)
#   sugar: (add) (mult) (pred) (monus) (absdist) (lift <fn>) (equality baire|real)
#          (bsum f) (bprod f) (cases f1 f2 P Q)

_NAMED = {"add": add, "mult": mult, "pred": pred, "monus": monus, "absdist": absdist}


def parse_scheme(text: str):
    try:
        obj = parse_sexp(text)
    except SexpError as exc:
        raise SchemeTypeError(f"bad scheme text: {exc}") from None
    return _from_sexp(obj)


def _from_sexp(obj):
    if isinstance(obj, str):
        obj = (obj,)
    if not isinstance(obj, tuple) or not obj or not isinstance(obj[0], str):
        raise SchemeTypeError(f"bad scheme node {obj!r}")
    head, args = obj[0], obj[1:]
    try:
        if head == "zero" and not args:
            return Zero
        if head == "succ" and not args:
            return Succ
        if head == "proj":
            return Proj(*args)
        if head == "const":
            return Const(*args)
        if head == "code":
            code = args[0] if isinstance(args[0], (tuple, int)) else (args[0],)
            return Code(code, *args[1:])
        if head == "universal":
            return Universal(*args)
        if head == "chi":
            return ChiZero(*args)
        if head == "theta":
            return Theta(*args)
        if head == "compose":
            f, gs, hs = args
            return Compose(_from_sexp(f), [_from_sexp(g) for g in gs], [_from_sexp(h) for h in hs])
        if head == "primrec":
            return PrimRec(_from_sexp(args[0]), _from_sexp(args[1]))
        if head == "mu":
            return Mu(_from_sexp(args[0]))
        if head in _NAMED and not args:
            return _NAMED[head]
        if head == "lift":
            return lift_classical(args[0])
        if head == "equality":
            return equality_scheme(*args)
        if head in ("bsum", "bprod"):
            return (bounded_sum if head == "bsum" else bounded_prod)(_from_sexp(args[0]))
        if head == "cases":
            return by_cases(*(_from_sexp(a) for a in args))
    except (TypeError, ValueError, IndexError) as exc:
        raise SchemeTypeError(f"bad arguments for {head}: {exc}") from None
    raise SchemeTypeError(f"unknown scheme node {head!r}")


def scheme_text(ast) -> str:
    """Core-node text of a scheme (sugar is expanded)."""
    return to_sexp(_to_sexp(ast))


def _to_sexp(ast):
    if ast is Zero:
        return ("zero",)
    if ast is Succ:
        return ("succ",)
    if isinstance(ast, Proj):
        return ("proj", ast.p, ast.q, ast.i)
    if isinstance(ast, Const):
        return ("const", ast.k, ast.p, ast.q)
    if isinstance(ast, Code):
        return ("code", ast.code, ast.p, ast.q)
    if isinstance(ast, Universal):
        return ("universal", ast.domain, ast.q)
    if isinstance(ast, ChiZero):
        return ("chi", ast.domain)
    if isinstance(ast, Theta):
        return ("theta", ast.domain)
    if isinstance(ast, Compose):
        return ("compose", _to_sexp(ast.f), tuple(_to_sexp(g) for g in ast.gs),
                tuple(_to_sexp(h) for h in ast.hs))
    if isinstance(ast, PrimRec):
        return ("primrec", _to_sexp(ast.G), _to_sexp(ast.H))
    if isinstance(ast, Mu):
        return ("mu", _to_sexp(ast.G))
    raise SchemeTypeError(f"not a scheme node: {ast!r}")


# ------------------------------------------------------------- compilation
#
# Pass 1 lowers a scheme to a register machine whose instructions are
#   inc r | dec r | jz r L | jmp L | label L
#   slave k            (static table entry k)
#   slave_fam j r      (family j at the value of register r)
#   ztest r            (r := 1 if the stack top is zero, else 0)
#   halt_nat r | halt_point
# Pass 2 turns that into quadruples.  The tape reads
#   $ R0 | R1 | ... | ^ billboard
# where register k is 1^v followed by "." fillers (left by decrements and
# reused by increments); every macro starts and ends on "$".

RET, BIT, TMP = 0, 1, 2
_FIRST_FREE = 3


class _Lowering:
    def __init__(self):
        self.code: list = []
        self.nregs = _FIRST_FREE
        self.table: dict = {}       # functional code -> static table key
        self.families: list = []    # stack depths with an apply family
        self.depth = 0
        self.labels = 0
        self.spare: list = []       # released registers; short tapes keep shifts cheap

    # registers and labels
    def reg(self) -> int:
        if self.spare:
            return self.spare.pop()
        self.nregs += 1
        return self.nregs - 1

    def release(self, *regs):
        self.spare.extend(sorted(regs, reverse=True))

    def label(self) -> str:
        self.labels += 1
        return f"L{self.labels}"

    def emit(self, *ins):
        self.code.append(ins)

    def clear(self, r):
        top, end = self.label(), self.label()
        self.emit("label", top)
        self.emit("jz", r, end)
        self.emit("dec", r)
        self.emit("jmp", top)
        self.emit("label", end)

    def move(self, a, b):
        """b += a; a := 0."""
        top, end = self.label(), self.label()
        self.emit("label", top)
        self.emit("jz", a, end)
        self.emit("dec", a)
        self.emit("inc", b)
        self.emit("jmp", top)
        self.emit("label", end)

    def copy(self, src, dst):
        self.clear(dst)
        s = self.reg()
        self.clear(s)       # a recycled register may still hold a value
        top, end = self.label(), self.label()
        self.emit("label", top)
        self.emit("jz", src, end)
        self.emit("dec", src)
        self.emit("inc", dst)
        self.emit("inc", s)
        self.emit("jmp", top)
        self.emit("label", end)
        self.move(s, src)
        self.release(s)

    def load(self, op, dst):
        if op[0] == "const":
            self.clear(dst)
            for _ in range(op[1]):
                self.emit("inc", dst)
        else:
            self.copy(op[1], dst)

    # slaves and the point stack
    def slave(self, code):
        key = self.table.setdefault(code, len(self.table))
        self.emit("slave", key)

    def st(self, op, arg):
        self.slave(("st-op", self.depth, op, arg))

    def push(self, bind):
        if bind[0] == "static":
            self.st("push-code", bind[1])
        else:
            self.st("copy", bind[1])
        self.depth += 1

    def pop(self, n=1):
        for _ in range(n):
            self.st("pop", 0)
            self.depth -= 1

    # schemes
    def nat(self, ast, ops, binds, dst):
        """dst := ast(ops; binds); the stack depth is unchanged."""
        k = _static_nat(ast, ops)
        if k is not None:
            self.load(k, dst)
            return
        if self.direct(ast, ops, dst):
            return
        if isinstance(ast, SuccFn):
            self.load(ops[0], dst)
            self.emit("inc", dst)
        elif isinstance(ast, Proj):
            self.load(ops[ast.i - 1], dst)
        elif isinstance(ast, ChiZero):
            b = binds[0]
            if b[0] == "slot" and b[1] == self.depth:
                self.ztest(dst)
            else:
                self.push(b)
                self.ztest(dst)
                self.pop()
        elif isinstance(ast, Compose):
            d0 = self.depth
            gops, temps = self.args(ast.gs, ops, binds)
            hb = [self.point(h, ops, binds) for h in ast.hs]
            self.nat(ast.f, gops, hb, dst)
            self.pop(self.depth - d0)
            self.release(*temps)
        elif isinstance(ast, PrimRec):
            counter, i, acc, tmp = self.reg(), self.reg(), self.reg(), self.reg()
            self.load(ops[0], counter)
            self.clear(i)
            rest = list(ops[1:])
            self.nat(ast.G, rest, binds, acc)
            top, end = self.label(), self.label()
            self.emit("label", top)
            self.emit("jz", counter, end)
            P = len(ops) + 1
            if ast.H == Compose(Succ, [Proj(P, len(binds), P)]):
                self.emit("inc", acc)           # acc := acc + 1 in place
            else:
                self.nat(ast.H, [("reg", i)] + rest + [("reg", acc)], binds, tmp)
                self.clear(acc)
                self.move(tmp, acc)
            self.emit("inc", i)
            self.emit("dec", counter)
            self.emit("jmp", top)
            self.emit("label", end)
            self.clear(dst)
            self.move(acc, dst)
            self.release(counter, i, acc, tmp)
        elif isinstance(ast, Mu):
            k, t = self.reg(), self.reg()
            self.clear(k)
            top, found = self.label(), self.label()
            self.emit("label", top)
            self.nat(ast.G, [("reg", k)] + list(ops), binds, t)
            self.emit("jz", t, found)
            self.emit("inc", k)
            self.emit("jmp", top)
            self.emit("label", found)
            self.clear(dst)
            self.move(k, dst)
            self.release(k, t)
        else:
            raise CompileError(f"cannot compile {type(ast).__name__} in a natural position")

    def direct(self, ast, ops, dst) -> bool:
        """Hand-written register code for add, mult, pred and monus."""
        if ast == pred:
            self.load(ops[0], dst)
            self.emit("dec", dst)
            return True
        if ast == add or ast == monus:
            self.load(ops[1], dst)
            c = self.reg()
            self.load(ops[0], c)
            top, end = self.label(), self.label()
            self.emit("label", top)
            self.emit("jz", c, end)
            self.emit("dec", c)
            self.emit("inc" if ast == add else "dec", dst)
            self.emit("jmp", top)
            self.emit("label", end)
            self.release(c)
            return True
        if ast == mult:
            self.clear(dst)
            c, d = self.reg(), self.reg()
            self.load(ops[0], c)
            outer, inner, done, end = (self.label() for _ in range(4))
            self.emit("label", outer)
            self.emit("jz", c, end)
            self.emit("dec", c)
            self.load(ops[1], d)
            self.emit("label", inner)
            self.emit("jz", d, done)
            self.emit("dec", d)
            self.emit("inc", dst)
            self.emit("jmp", inner)
            self.emit("label", done)
            self.emit("jmp", outer)
            self.emit("label", end)
            self.release(c, d)
            return True
        return False

    def args(self, gs, ops, binds):
        out, temps = [], []
        for g in gs:
            k = _static_nat(g, ops)
            if k is not None:
                out.append(k)
            elif isinstance(g, Proj) and g.i <= g.p:
                out.append(ops[g.i - 1])
            else:
                r = self.reg()
                temps.append(r)
                self.nat(g, ops, binds, r)
                out.append(("reg", r))
        return out, temps

    def ztest(self, dst):
        self.clear(dst)
        self.emit("ztest", dst)

    def point(self, ast, ops, binds):
        """A binding for ast(ops; binds); a slot result sits on top of the stack."""
        if isinstance(ast, Proj):
            return binds[ast.i - ast.p - 1]
        if isinstance(ast, Universal):
            e = ops[0]
            # name functionals by their code, so program texts do not depend on the store
            fn = (e[2] or e[1]) if e[0] == "const" else None
            if fn is not None and all(b[0] == "static" for b in binds):
                arg = binds[0][1] if len(binds) == 1 else ("tuple",) + tuple(b[1] for b in binds)
                return ("static", ("compose", fn, arg))
            for b in binds:
                self.push(b)
            if len(binds) > 1:
                self.st("pair", len(binds))
                self.depth -= len(binds) - 1
            if fn is not None:
                self.st("apply", fn)
            else:
                if self.depth not in self.families:
                    self.families.append(self.depth)
                self.emit("slave_fam", self.families.index(self.depth), e[1])
            return ("slot", self.depth)
        if isinstance(ast, Theta):
            raise CompileError("Theta is only evaluated, not compiled")
        if isinstance(ast, Compose):
            d0 = self.depth
            gops, temps = self.args(ast.gs, ops, binds)
            hb = [self.point(h, ops, binds) for h in ast.hs]
            res = self.point(ast.f, gops, hb)
            self.release(*temps)
            if res[0] == "static" or res[1] <= d0:
                self.pop(self.depth - d0)
                return res
            if res[1] != self.depth:
                self.push(res)
            extra = self.depth - d0 - 1
            if extra:
                self.st("drop-under", extra)
                self.depth -= extra
            return ("slot", self.depth)
        if isinstance(ast, PrimRec):
            d0 = self.depth
            counter, i = self.reg(), self.reg()
            self.load(ops[0], counter)
            self.clear(i)
            rest = list(ops[1:])
            g = self.point(ast.G, rest, binds)
            if g[0] == "static" or g[1] <= d0:
                self.push(g)
            acc = ("slot", d0 + 1)
            top, end = self.label(), self.label()
            self.emit("label", top)
            self.emit("jz", counter, end)
            h = self.point(ast.H, [("reg", i)] + rest, list(binds) + [acc])
            if h[0] == "slot" and h[1] == d0 + 2:
                self.st("drop-under", 1)
                self.depth -= 1
            elif h != acc:
                self.pop()
                self.push(h)
            self.emit("inc", i)
            self.emit("dec", counter)
            self.emit("jmp", top)
            self.emit("label", end)
            self.release(counter, i)
            return acc
        raise CompileError(f"cannot compile {type(ast).__name__} in a point position")


def _static_nat(ast, ops) -> Optional[tuple]:
    """("const", k, code-or-None) when the value is known at compile time."""
    if isinstance(ast, Const):
        return ("const", ast.k, None)
    if isinstance(ast, Code):
        return ("const", ast.handle, ast.code)
    if ast is Zero:
        return ("const", 0, None)
    if isinstance(ast, Proj) and ast.i <= ast.p and ops[ast.i - 1][0] == "const":
        return ops[ast.i - 1]
    if isinstance(ast, SuccFn) and ops[0][0] == "const":
        return ("const", ops[0][1] + 1, None)
    return None


def _header(name, codomain):
    out = [f".name {name}", ".start qs", ".halt qh", ".alphabet 0 1 _ $ | ^ ."]
    if codomain == "point":
        out.append(".codomain point")
    return out


def compile_scheme(ast, name: str = "compiled scheme") -> str:
    """Master program text computing the scheme over Baire space."""
    sig = typecheck(ast)
    # one slave call: copy e onto the billboard and let the slaves run it
    if isinstance(ast, Universal) and ast.q == 1:
        return "\n".join([f".name {name}", ".start qs", ".halt qh", ".alphabet 0 1 _",
                          ".codomain point", ".fn-family 0 1 $",
                          "qs 0 0 S", "qs 1 1 S", "S _ _ qh", ""])
    # one zero test of the input itself
    if isinstance(ast, ChiZero):
        return "\n".join([f".name {name}", ".start qs", ".halt qh", ".alphabet 0 1 _",
                          "qs _ _ E", "E _ _ qh", ""])
    if _domains(ast, set()) - {"baire"}:
        raise CompileError("only Baire schemes compile to register masters")
    low = _Lowering()
    ops = [("reg", low.reg()) for _ in range(sig.p)]
    inputs = [r for _, r in ops]
    if sig.q == 1:
        binds = [("static", ("identity",))]
    else:
        binds = [("static", ("component", sig.q, j)) for j in range(sig.q)]
    body_start = len(low.code)
    if sig.sort == "Nat":
        out = low.reg()
        low.nat(ast, ops, binds, out)
        low.emit("halt_nat", out)
    else:
        res = low.point(ast, ops, binds)
        if res[0] == "static":
            low.push(res)
        low.slave(("st-top", low.depth))
        low.emit("halt_point")
    if any(ins[0] in ("slave", "slave_fam", "ztest") for ins in low.code):
        key = low.table.setdefault(("st-init",), len(low.table))
        low.code.insert(body_start, ("slave", key))
    return _assemble(low, inputs, sig, name)


# ------------------------------------------------------------- quadruples


class _Quads:
    SYMS = ("0", "1", "_", "$", "|", "^", ".")

    def __init__(self):
        self.lines: list = []
        self.n = 0

    def state(self, hint="s") -> str:
        self.n += 1
        return f"{hint}{self.n}"

    def q(self, state, sym, act, nxt):
        self.lines.append(f"{state} {sym} {act} {nxt}")

    def every(self, state, act, nxt, but=()):
        for s in self.SYMS:
            if s not in but:
                self.q(state, s, act if act != "=" else s, nxt)

    def back(self, cont) -> str:
        """Walk left to "$" and continue there."""
        st = self.state("b")
        self.every(st, "L", st, but=("$",))
        self.q(st, "$", "$", cont)
        return st

    def to_register(self, entry, r, cont):
        """From "$" at entry to the first cell of register r."""
        cur = self.state("w")
        self.q(entry, "$", "R", cur)
        for _ in range(r):
            nxt = self.state("w")
            self.q(cur, "1", "R", cur)
            self.q(cur, ".", "R", cur)
            self.q(cur, "|", "R", nxt)
            cur = nxt
        return cur

    def inc(self, entry, r, cont):
        at = self.to_register(entry, r, None)
        back = self.back(cont)
        self.q(at, "1", "R", at)
        self.q(at, ".", "1", back)              # reuse a filler cell
        # no filler left: insert a cell by shifting the rest of the tape right
        carried = ("1", ".", "|", "^", "0")
        put = {c: self.state("p") for c in carried}
        mv = {c: self.state("m") for c in carried}
        self.q(at, "|", "1", mv["|"])
        for c in carried:
            self.every(mv[c], "R", put[c])
            self.q(put[c], "_", c, back)
            for x in carried:
                self.q(put[c], x, c, mv[x])

    def dec(self, entry, r, cont):
        at = self.to_register(entry, r, None)
        back = self.back(cont)
        run, last = self.state("d"), self.state("d")
        self.q(at, "|", "|", back)
        self.q(at, ".", ".", back)
        self.q(at, "1", "R", run)
        self.q(run, "1", "R", run)
        self.q(run, ".", "L", last)
        self.q(run, "|", "L", last)
        self.q(last, "1", ".", back)            # the last 1 becomes a filler

    def jz(self, entry, r, yes, no):
        at = self.to_register(entry, r, None)
        self.q(at, "|", "|", self.back(yes))
        self.q(at, ".", ".", self.back(yes))
        self.q(at, "1", "1", self.back(no))

    def to_end(self, entry, final):
        """From "$" right to the first blank; ``final`` is the quad taking over there."""
        st = self.state("e")
        self.q(entry, "$", "R", st)
        self.every(st, "R", st, but=("_",))
        return st

    def bb_write(self, entry, k, cont):
        st = self.to_end(entry, None)
        bits = bin(k)[2:]
        cur = self.state("v")
        self.q(st, "_", "^", cur)
        for b in bits:
            nxt = self.state("v")
            self.every(cur, "R", nxt)
            w = self.state("v")
            self.q(nxt, "_", b, w)
            cur = w
        self.every(cur, "=", self.back(cont))

    def bininc(self, entry, cont):
        st, dig, carry, cm, ov1, ov2 = (self.state(h) for h in ("g", "g", "c", "c", "o", "o"))
        back = self.back(cont)
        self.q(entry, "$", "R", st)
        self.every(st, "R", st, but=("^",))
        self.q(st, "^", "R", dig)
        self.q(dig, "0", "R", dig)
        self.q(dig, "1", "R", dig)
        self.q(dig, "_", "L", carry)
        self.q(carry, "1", "0", cm)
        self.every(cm, "L", carry)
        self.q(carry, "0", "1", back)
        self.q(carry, "^", "R", ov1)
        self.q(ov1, "0", "1", ov2 + "m")
        self.every(ov2 + "m", "R", ov2)
        self.q(ov2, "0", "R", ov2)
        self.q(ov2, "_", "0", back)

    def to_billboard(self, entry, final):
        st = self.state("t")
        self.q(entry, "$", "R", st)
        self.every(st, "R", st, but=("^",))
        self.q(st, "^", "R", final)


def _assemble(low: _Lowering, inputs, sig, name) -> str:
    # expand sites: RET := site id, then the slave or zero test
    code = []
    sites = 0
    stride = max(1, len(low.families))
    base = len(low.table)
    for ins in low.code:
        if ins[0] == "slave":
            code += [("inc", RET)] * sites + [("bb_write", ins[1]), ("goto_S", sites)]
            sites += 1
        elif ins[0] == "slave_fam":
            j, r = ins[1], ins[2]
            top, end = f"F{len(code)}a", f"F{len(code)}b"
            code.append(("bb_write", base + j))
            code += [("copy_tmp", r), ("label", top), ("jz", TMP, end), ("dec", TMP)]
            code += [("bininc",)] * stride + [("jmp", top), ("label", end)]
            code += [("inc", RET)] * sites + [("goto_S", sites)]
            sites += 1
        elif ins[0] == "ztest":
            code += [("inc", RET)] * sites + [("goto_E", sites), ("move_bit", ins[1])]
            sites += 1
        else:
            code.append(ins)
    # copy_tmp needs a scratch register; reuse the lowering's copy macro
    final = []
    for ins in code:
        if ins[0] == "copy_tmp":
            sub = _Lowering()
            sub.nregs, sub.labels = low.nregs, low.labels
            sub.copy(ins[1], TMP)
            low.nregs, low.labels = sub.nregs, sub.labels
            final += sub.code
        elif ins[0] == "move_bit":
            sub = _Lowering()
            sub.labels = low.labels
            sub.move(BIT, ins[1])
            low.labels = sub.labels
            final += sub.code
        else:
            final.append(ins)
    code = final

    T = _Quads()
    idx = 0
    labels = {}
    for ins in code:
        if ins[0] == "label":
            labels[ins[1]] = idx
        else:
            idx += 1
    steps = [ins for ins in code if ins[0] != "label"]
    names = [f"i{k}" for k in range(len(steps) + 1)]

    def at(label):
        return names[labels[label]]

    cont_of_site = {}
    for k, ins in enumerate(steps):
        here, nxt = names[k], names[k + 1]
        op = ins[0]
        if op == "inc":
            T.inc(here, ins[1], nxt)
        elif op == "dec":
            T.dec(here, ins[1], nxt)
        elif op == "jz":
            T.jz(here, ins[1], at(ins[2]), nxt)
        elif op == "jmp":
            T.q(here, "$", "$", at(ins[1]))
        elif op == "bb_write":
            T.bb_write(here, ins[1], nxt)
        elif op == "bininc":
            T.bininc(here, nxt)
        elif op == "goto_S":
            T.to_billboard(here, "S")
            cont_of_site[ins[1]] = nxt
        elif op == "goto_E":
            st = T.to_end(here, None)
            T.q(st, "_", "_", "E")
            cont_of_site[ins[1]] = nxt
        elif op == "halt_nat":
            T.bb_write(here, 0, names[k] + "n")
            # loop: while r > 0, r -= 1 and bump the numeral
            loop, body, inc, done = names[k] + "n", names[k] + "d", names[k] + "c", names[k] + "h"
            T.jz(loop, ins[1], done, body)
            T.dec(body, ins[1], inc)
            T.bininc(inc, loop)
            T.to_billboard(done, "qh")
        elif op == "halt_point":
            T.q(here, "$", "$", "qh")
        else:
            raise CompileError(f"unknown register instruction {op}")
    T.q(names[-1], "$", "$", "qh")    # unreachable: every program ends with a halt

    # after a slave call: erase the billboard, return to "$", dispatch on RET
    if cont_of_site:
        dispatch = "D0"
        post = []
        e1, e2, e3 = "PS1", "PS2", "PS3"
        post.append(("S", "_", "_", e1))
        T.q(e1, "0", "_", e2)
        T.q(e1, "1", "_", e2)
        T.q(e1, "_", "L", e3)
        T.every(e2, "R", e1)
        T.q(e3, "_", "L", e3)
        T.q(e3, "^", "_", T.back(dispatch))
        post.append(("E", "_", "_", "PE"))
        bump = "PB"
        T.q("PE", "1", "_", T.back(bump))
        T.q("PE", "0", "_", T.back(dispatch))
        T.inc(bump, BIT, dispatch)
        for s in range(sites):
            here = f"D{s}"
            if s == sites - 1:
                T.q(here, "$", "$", cont_of_site[s])
            else:
                dec = f"D{s}x"
                T.jz(here, RET, cont_of_site[s], dec)
                T.dec(dec, RET, f"D{s + 1}")
        has_s = any(ins[0] == "goto_S" for ins in steps)
        has_e = any(ins[0] == "goto_E" for ins in steps)
        for line in post:
            if (line[0] == "S" and has_s) or (line[0] == "E" and has_e):
                T.lines.insert(0, " ".join(line))

    # prologue: inputs become registers
    pro = _Quads()
    pro.n = T.n
    nregs = low.nregs
    if not inputs:
        cur = "qs"
        pro.q(cur, "_", "$", "P0")
        cur = "P0"
        for k in range(nregs):
            a, b = pro.state("P"), pro.state("P")
            pro.every(cur, "R", a)
            pro.q(a, "_", "|", b)
            cur = b
        pro.every(cur, "=", pro.back(names[0]))
    else:
        cur = "qs"
        for j in range(len(inputs)):
            nxt = pro.state("P")
            pro.q(cur, "0", "R", cur)
            pro.q(cur, "1", "R", cur)
            if j < len(inputs) - 1:
                pro.q(cur, "_", "R", nxt)
            else:
                pro.q(cur, "_", "$", nxt)
            cur = nxt
        for k in range(nregs):
            a, b = pro.state("P"), pro.state("P")
            pro.every(cur, "R", a)
            pro.q(a, "_", "|", b)
            cur = b
        conv = [pro.state("C") for _ in inputs] + [names[0]]
        pro.every(cur, "=", pro.back(conv[len(inputs) - 1]))
        for j in reversed(range(len(inputs))):
            here, done = conv[j], conv[j - 1] if j > 0 else names[0]
            b, z, dgo, dec, dm, er, erm, ret, inc = (pro.state("C") for _ in range(9))
            pro.q(here, "$", "L", b)
            pro.q(b, "_", "L", b)
            pro.q(b, "0", "0", z)
            pro.q(b, "1", "1", z)
            pro.q(z, "0", "L", z)
            pro.q(z, "1", "R", dgo)             # nonzero: decrement and bump register j
            pro.q(z, "_", "R", er)              # zero: erase the numeral
            pro.every(dgo, "R", dgo, but=("$",))
            pro.q(dgo, "$", "L", dec + "s")
            pro.q(dec + "s", "_", "L", dec + "s")
            pro.q(dec + "s", "0", "0", dec)
            pro.q(dec + "s", "1", "1", dec)
            pro.q(dec, "0", "1", dm)
            pro.every(dm, "L", dec)
            pro.q(dec, "1", "0", ret)
            pro.every(ret, "R", ret, but=("$",))
            pro.q(ret, "$", "$", inc)
            pro.inc(inc, inputs[j], here)
            pro.q(er, "0", "_", erm)
            pro.q(er, "1", "_", erm)
            pro.every(erm, "R", er)
            pro.q(er, "_", "R", er + "r")
            pro.q(er, "$", "$", done)
            pro.q(er + "r", "_", "R", er + "r")
            pro.q(er + "r", "$", "$", done)

    lines = _header(name, "point" if sig.sort == "Point" else "nat")
    entries = sorted(low.table.items(), key=lambda kv: kv[1])
    lines += [f".fn {k} {to_sexp(code)}" for code, k in entries]
    stride = max(1, len(low.families))
    for j, depth in enumerate(low.families):
        lines.append(f".fn-family {base + j} {stride} (st-op {depth} apply $)")
    seen = {}
    for line in pro.lines + T.lines:
        key = tuple(line.split()[:2])
        if seen.setdefault(key, line) != line:
            raise CompileError(f"conflicting quadruples {seen[key]!r} and {line!r}")
        if seen[key] is line:
            lines.append(line)
    return "\n".join(lines) + "\n"
