"""Type-two functionals: a store of indexed codes, builtin functionals, a
quadruple oracle Turing machine backend, s-m-n composition, the restricted
(#-writing) slave protocol and the extended zero test chi_#.

A functional code is a nested tuple ``(name, *args)``; integers stand for
store handles.  ``output_stream(code, x)`` is the memoized stream
``Phi^x(code)``; ``apply`` queries one entry of it under a step budget.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Optional

from .cauchy import (HASH, BeyondPrefix, Components, Divergence, DivergentCertified,
                     Eventually, LazyCert, Limit, Meter, Nonzero, OutOfFuel, Stream,
                     Unknown, Value, Zero, ZeroOrHash, certified_limit)
from .numerics import cutoff_subtract, pow2, rat
from .sexp import SexpError, parse_sexp, to_sexp

__all__ = [
    "Store", "STORE", "C0", "MalformedFunctional", "register", "lookup", "apply",
    "output_stream", "smn_compose", "g_sharp", "restricted_run",
    "restricted_slave_entry", "chi_sharp", "builtin", "BUILTINS", "classical",
    "interleave", "parse_functional", "OracleTM", "parse_machine_text",
    "MachineText", "MachineSyntaxError", "SlaveRecord", "CERT_BUDGET",
]

CERT_BUDGET = 200_000


class MalformedFunctional(ValueError):
    pass


# ------------------------------------------------------------- classical functions

_CLASSICAL: dict[str, Callable[[int], int]] = {
    "id": lambda n: n,
    "succ": lambda n: n + 1,
    "pred": lambda n: cutoff_subtract(n, 1),
    "exp2": lambda n: 1 << n,
    "double": lambda n: 2 * n,
    "half": lambda n: n // 2,
    "square": lambda n: n * n,
    "sgn": lambda n: 1 if n else 0,
    "nsgn": lambda n: 0 if n else 1,
    "mod2": lambda n: n % 2,
    "zero": lambda n: 0,
}
_CLASSICAL_PARAM: dict[str, Callable[[int, int], int]] = {
    "plus": lambda k, n: n + k,
    "times": lambda k, n: n * k,
    "constant": lambda k, n: k,
    "monus": lambda k, n: cutoff_subtract(n, k),
}


def classical(fcode) -> Callable[[int], int]:
    """Resolve a classical (number-theoretic) function code like ``succ`` or ``(plus 3)``."""
    if isinstance(fcode, str) and fcode in _CLASSICAL:
        return _CLASSICAL[fcode]
    if (isinstance(fcode, tuple) and len(fcode) == 2 and fcode[0] in _CLASSICAL_PARAM
            and isinstance(fcode[1], int) and fcode[1] >= 0):
        f, k = _CLASSICAL_PARAM[fcode[0]], fcode[1]
        return lambda n: f(k, n)
    raise MalformedFunctional(f"unknown classical function {fcode!r}")


# ------------------------------------------------------------- builtin registry


class Builtin:
    def __init__(self, name: str, entry, arity: Optional[int], out_kind, validate):
        self.name = name
        self.entry = entry
        self.arity = arity
        self.out_kind = out_kind
        self.validate = validate
        self.certify: Optional[Callable] = None

    def certifier(self, fn):
        self.certify = fn
        return fn

    def kind_for(self, code, x: Stream) -> str:
        if callable(self.out_kind):
            return self.out_kind(code, x)
        if self.out_kind:
            return self.out_kind
        return "baire" if x.kind == "hash" else x.kind


BUILTINS: dict[str, Builtin] = {}


def builtin(name: str, arity: Optional[int] = 0, out_kind=None, validate=None):
    """Register ``fn(code, x, i, meter)`` as the entry function of a builtin."""

    def deco(fn):
        BUILTINS[name] = Builtin(name, fn, arity, out_kind, validate)
        return BUILTINS[name]

    return deco


def validate_code(code, store: "Store"):
    if isinstance(code, int):
        store.lookup(code)
        return
    if not isinstance(code, tuple) or not code or not isinstance(code[0], str):
        raise MalformedFunctional(f"malformed functional code {code!r}")
    b = BUILTINS.get(code[0])
    if b is None:
        raise MalformedFunctional(f"unknown functional {code[0]!r}")
    if b.arity is not None and len(code) - 1 != b.arity:
        raise MalformedFunctional(f"{code[0]} takes {b.arity} argument(s), got {len(code) - 1}")
    if b.validate:
        b.validate(code, store)


# ------------------------------------------------------------- store


class Store:
    """Append-only table of functional codes.  Handle 0 is the identity."""

    def __init__(self):
        self._codes: list = []
        self._interned: dict = {}
        self._lock = threading.Lock()
        self.intern(("identity",))

    def __len__(self):
        return len(self._codes)

    def register(self, code) -> int:
        validate_code(code, self)
        with self._lock:
            self._codes.append(code)
            return len(self._codes) - 1

    def intern(self, code) -> int:
        """Like register, but equal codes share one handle (index maps are functions)."""
        with self._lock:
            h = self._interned.get(code)
        if h is not None:
            return h
        validate_code(code, self)
        with self._lock:
            h = self._interned.get(code)
            if h is None:
                self._codes.append(code)
                h = self._interned[code] = len(self._codes) - 1
            return h

    def lookup(self, handle: int):
        try:
            return self._codes[handle]
        except (IndexError, TypeError):
            raise MalformedFunctional(f"no functional with handle {handle!r}") from None


C0 = 0


def register(code) -> int:
    return STORE.register(parse_functional(code) if isinstance(code, str) else code)


def lookup(handle: int):
    return STORE.lookup(handle)


def parse_functional(text: str):
    """Parse a textual functional code such as ``(lift succ)``."""
    obj = parse_sexp(text)
    if isinstance(obj, str):
        obj = (obj,)
    validate_code(obj, STORE)
    return obj


def resolve(code):
    while isinstance(code, int):
        code = STORE.lookup(code)
    return code


# ------------------------------------------------------------- evaluation


def output_stream(code, x: Stream) -> Stream:
    """The memoized stream Phi^x(code)."""
    key = ("out", code)
    s = x.derived.get(key)
    if s is not None:
        return s
    c = resolve(code)
    b = BUILTINS[c[0]]
    entry = b.entry

    def fn(i, meter, c=c, x=x):
        return entry(c, x, i, meter)

    cert = None
    if b.certify is not None:
        certify = b.certify
        cert = LazyCert(lambda: certify(c, x, Meter(CERT_BUDGET)))
    s = Stream(fn, b.kind_for(c, x), cert, 1, to_sexp(c) if not isinstance(code, int) else f"#{code}")
    return x.derived.setdefault(key, s)


def apply(e, x: Stream, i: int, fuel: int):
    """Entry i of Phi^x(e) within ``fuel`` steps, as a PartialResult."""
    s = output_stream(e, x)
    try:
        return s.query(i, fuel)
    except BeyondPrefix:
        return Unknown("oracle prefix exhausted")


def smn_compose(p, c) -> int:
    """Index of x -> Phi^{Phi^x(c)}(p)."""
    return STORE.intern(("smn", p, c))


def g_sharp(p, c) -> int:
    """Index whose restricted run on x is a #-extension of Phi^{Phi^x(c)}(p)."""
    return STORE.intern(("gsharp", p, c))


# ------------------------------------------------------------- basic builtins


def _same_cert(code, x, meter):
    return x.certificate


@builtin("identity")
def _identity(code, x, i, meter):
    return x.entry(i, meter)


_identity.certifier(_same_cert)


def _validate_lift(code, store):
    classical(code[1])


@builtin("lift", 1, "baire", _validate_lift)
def _lift(code, x, i, meter):
    v = x.entry(i, meter)
    if v is HASH:
        return HASH
    return classical(code[1])(v)


@_lift.certifier
def _lift_cert(code, x, meter):
    cert = x.certificate
    if isinstance(cert, Eventually) and cert.q is not HASH:
        return Eventually(classical(code[1])(cert.q), cert.n0)
    return None


def _const_kind(code, x):
    v = code[1]
    return "baire" if isinstance(v, int) and v >= 0 else "real"


@builtin("const", 1, _const_kind)
def _const(code, x, i, meter):
    return code[1]


@_const.certifier
def _const_cert(code, x, meter):
    return Eventually(code[1], 0)


@builtin("shift", 1)
def _shift(code, x, i, meter):
    return x.entry(i + code[1], meter)


@_shift.certifier
def _shift_cert(code, x, meter):
    cert = x.certificate
    if isinstance(cert, Eventually):
        return Eventually(cert.q, max(0, cert.n0 - code[1]))
    if isinstance(cert, Limit):
        return cert
    return None


@builtin("first-repeat")
def _first_repeat(code, x, i, meter):
    return x.entry(0, meter)


@_first_repeat.certifier
def _first_repeat_cert(code, x, meter):
    return Eventually(x.entry(0, meter), 0)


@builtin("burn", 1)
def _burn(code, x, i, meter):
    meter.charge(code[1])
    return x.entry(i, meter)


_burn.certifier(_same_cert)


@builtin("diverge")
def _diverge(code, x, i, meter):
    raise Divergence("everywhere divergent functional")


@builtin("partial", 1)
def _partial(code, x, i, meter):
    if i >= code[1]:
        raise Divergence(f"entry {i} of a functional defined only below {code[1]}")
    return x.entry(i, meter)


# ------------------------------------------------------------- tuples of streams


def interleave(*streams: Stream) -> Stream:
    """(x1(0), ..., xq(0), x1(1), ...) with component certificates."""
    q = len(streams)
    kind = "real" if all(s.kind == "real" for s in streams) else "baire"

    def fn(i, meter):
        return streams[i % q].entry(i // q, meter)

    cert = LazyCert(lambda: Components(tuple(s.certificate for s in streams)))
    return Stream(fn, kind, cert, 0, "interleave(" + ",".join(s.name for s in streams) + ")")


def _component_cert(x: Stream, q: int, r: int):
    cert = x.certificate
    if isinstance(cert, Components) and len(cert.parts) == q:
        return cert.parts[r]
    if isinstance(cert, Eventually):
        return Eventually(cert.q, -(-max(0, cert.n0 - r) // q))
    return None


def _validate_deinterleave(code, store):
    q, r = code[1], code[2]
    if not (isinstance(q, int) and isinstance(r, int) and 0 <= r < q):
        raise MalformedFunctional(f"bad component selector {code!r}")


@builtin("component", 2, None, _validate_deinterleave)
def _component(code, x, i, meter):
    q, r = code[1], code[2]
    return x.entry(i * q + r, meter)


@_component.certifier
def _component_cert_fn(code, x, meter):
    return _component_cert(x, code[1], code[2])


@builtin("absdiff", 0, "baire")
def _absdiff(code, x, i, meter):
    a, b = x.entry(2 * i, meter), x.entry(2 * i + 1, meter)
    return abs(a - b)


@_absdiff.certifier
def _absdiff_cert(code, x, meter):
    ca, cb = _component_cert(x, 2, 0), _component_cert(x, 2, 1)
    if isinstance(ca, Eventually) and isinstance(cb, Eventually):
        return Eventually(abs(ca.q - cb.q), max(ca.n0, cb.n0))
    return None


# ------------------------------------------------------------- real builtins
#
# Real functionals read the oracle a few places ahead so that they also map
# dyadic-Cauchy oracles (|d(i) - d(j)| <= 2^-i) to fast Cauchy outputs.


@lru_cache(maxsize=None)
def _lead(lipschitz: Fraction) -> int:
    """Smallest k >= 2 with 2^k >= 4 * lipschitz."""
    k = 2
    while pow2(k) < 4 * lipschitz:
        k += 1
    return k


def _real_limit(x: Stream):
    return certified_limit(x.certificate)


@builtin("real-id", 0, "real")
def _real_id(code, x, i, meter):
    return rat(x.entry(i + 2, meter))


@_real_id.certifier
def _real_id_cert(code, x, meter):
    q = _real_limit(x)
    return None if q is None else Limit(q)


def _validate_affine(code, store):
    rat(code[1]), rat(code[2])


@builtin("affine", 2, "real", _validate_affine)
def _affine(code, x, i, meter):
    a, b = rat(code[1]), rat(code[2])
    return a * rat(x.entry(i + _lead(abs(a)), meter)) + b


@_affine.certifier
def _affine_cert(code, x, meter):
    q = _real_limit(x)
    return None if q is None else Limit(rat(code[1]) * q + rat(code[2]))


@builtin("real-const", 1, "real")
def _real_const(code, x, i, meter):
    return rat(code[1])


@_real_const.certifier
def _real_const_cert(code, x, meter):
    return Eventually(rat(code[1]), 0)


@builtin("real-absdiff", 0, "real")
def _real_absdiff(code, x, i, meter):
    a, b = x.entry(2 * (i + 1), meter), x.entry(2 * (i + 1) + 1, meter)
    return abs(rat(a) - rat(b))


@_real_absdiff.certifier
def _real_absdiff_cert(code, x, meter):
    ca, cb = _component_cert(x, 2, 0), _component_cert(x, 2, 1)
    qa, qb = certified_limit(ca), certified_limit(cb)
    if qa is None or qb is None:
        return None
    return Limit(abs(qa - qb))


@builtin("zero-prep", 0, "real")
def _zero_prep(code, x, i, meter):
    """0 while every earlier entry is small, alpha(i)/2 once some entry is large."""
    for j in range(i):
        if abs(rat(x.entry(j, meter))) >= pow2(1 - j):
            return rat(x.entry(i, meter)) / 2
    return Fraction(0)


@_zero_prep.certifier
def _zero_prep_cert(code, x, meter):
    if _real_limit(x) == 0:
        return Eventually(Fraction(0), 0)
    return None


# ------------------------------------------------------------- composition


def _validate_pair(code, store):
    for part in code[1:]:
        validate_code(part, store)


def _compose_entry(code, x, i, meter):
    inner = output_stream(code[2], x)
    return output_stream(code[1], inner).entry(i, meter)


def _compose_cert(code, x, meter):
    return output_stream(code[1], output_stream(code[2], x)).certificate


def _compose_kind(code, x):
    return output_stream(code[1], output_stream(code[2], x)).kind


for _name in ("smn", "gsharp", "compose"):
    builtin(_name, 2, _compose_kind, _validate_pair)(_compose_entry).certifier(_compose_cert)


# ------------------------------------------------------------- machine text format


class MachineSyntaxError(ValueError):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass
class MachineText:
    start: str
    halt: str
    alphabet: tuple
    quads: dict  # (state, symbol) -> (action, next_state); S/E keyed by (state, None)
    functionals: dict = field(default_factory=dict)
    codomain: str = "nat"
    name: str = ""
    order: list = field(default_factory=list)


BLANK = "_"


def parse_machine_text(text: str, master: bool = False) -> MachineText:
    """Parse the quadruple assembly format shared by oracle TMs and masters."""
    start = halt = None
    alphabet = None
    name = ""
    codomain = "nat"
    quads: dict = {}
    order: list = []
    functionals: dict = {}
    lines_of: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        head = parts[0]
        if head.startswith("."):
            if head == ".start" and len(parts) == 2:
                start = parts[1]
            elif head == ".halt" and len(parts) == 2:
                halt = parts[1]
            elif head == ".alphabet" and len(parts) >= 2:
                alphabet = tuple(parts[1:])
            elif head == ".name" and len(parts) >= 2:
                name = " ".join(parts[1:])
            elif head == ".codomain" and len(parts) == 2 and parts[1] in ("nat", "point") and master:
                codomain = parts[1]
            elif head == ".fn-family" and master and len(parts) >= 4:
                try:
                    base, stride = int(parts[1]), int(parts[2])
                    template = parse_sexp(line.split(None, 3)[3])
                except (ValueError, SexpError) as exc:
                    raise MachineSyntaxError(f"bad functional family: {exc}", lineno) from None
                fams = functionals.setdefault("*", [])
                if base < 0 or stride < 1 or any(f[1] != stride for f in fams) \
                        or any((f[0] - base) % stride == 0 for f in fams):
                    raise MachineSyntaxError("families need one common stride and distinct residues", lineno)
                fams.append((base, stride, template))
            elif head == ".fn" and master and len(parts) >= 3:
                try:
                    k = int(parts[1])
                    functionals[k] = parse_functional(line.split(None, 2)[2])
                except (ValueError, MalformedFunctional) as exc:
                    raise MachineSyntaxError(f"bad functional table entry: {exc}", lineno) from None
                if k < 0:
                    raise MachineSyntaxError("functional table keys are naturals", lineno)
            else:
                raise MachineSyntaxError(f"unknown or malformed directive {line!r}", lineno)
            continue
        if len(parts) != 4:
            raise MachineSyntaxError(f"expected a quadruple, got {line!r}", lineno)
        q, a, act, nxt = parts
        if q in ("S", "E"):
            if not master:
                raise MachineSyntaxError(f"{q} commands only exist in master programs", lineno)
            key = (q, None)
        else:
            key = (q, a)
            if act == "?" and master:
                raise MachineSyntaxError("oracle queries are slave-only", lineno)
        if key in quads:
            raise MachineSyntaxError(f"duplicate quadruple for state {q} symbol {a}", lineno)
        quads[key] = (act, nxt)
        order.append(key)
        lines_of[key] = lineno
    if start is None:
        raise MachineSyntaxError("missing .start directive")
    if halt is None:
        raise MachineSyntaxError("missing .halt directive")
    if alphabet is None:
        alphabet = ("0", "1", BLANK)
    if BLANK not in alphabet:
        alphabet = alphabet + (BLANK,)
    sources = {k[0] for k in quads}
    known = sources | {halt}
    for key in order:
        act, nxt = quads[key]
        ln = lines_of[key]
        if key[1] is not None and key[1] not in alphabet:
            raise MachineSyntaxError(f"symbol {key[1]!r} is not in the alphabet", ln)
        if key[1] is not None and act not in ("L", "R", "?") and act not in alphabet:
            raise MachineSyntaxError(f"symbol {act!r} is not in the alphabet", ln)
        if nxt not in known:
            raise MachineSyntaxError(f"unknown state {nxt!r}", ln)
    if start not in known:
        raise MachineSyntaxError(f"unknown start state {start!r}")
    if halt in sources:
        raise MachineSyntaxError("the halting state has outgoing quadruples")
    if "*" in functionals:
        functionals["*"] = tuple(functionals["*"])
        low = min(f[0] for f in functionals["*"])
        if any(k >= low for k in functionals if k != "*"):
            raise MachineSyntaxError("table entries must lie below every family base")
    return MachineText(start, halt, alphabet, quads, functionals, codomain, name, order)


def family_lookup(families, p: int):
    """The code a billboard p names through a family, or None."""
    for base, stride, template in families:
        if p >= base and (p - base) % stride == 0:
            return family_member(template, (p - base) // stride)
    return None


def family_member(template, e: int):
    """The template with every ``$`` atom replaced by e."""
    if template == "$":
        return e
    if isinstance(template, tuple):
        return tuple(family_member(t, e) for t in template)
    return template


def read_numeral(tape: dict, pos: int) -> tuple[Optional[int], int]:
    """Binary numeral starting at ``pos``; returns (value or None, length)."""
    digits = []
    while tape.get(pos + len(digits), BLANK) in ("0", "1"):
        digits.append(tape[pos + len(digits)])
    if not digits:
        return None, 0
    return int("".join(digits), 2), len(digits)


def write_numeral(tape: dict, pos: int, value: int):
    for k, ch in enumerate(bin(value)[2:]):
        tape[pos + k] = ch


class OracleTM:
    """Single-tape oracle TM.  ``q a ? q'`` replaces the numeral m at the head by x(m)."""

    def __init__(self, text: str):
        self.text = text
        self.machine = parse_machine_text(text)

    def run(self, x: Stream, i: int, meter: Meter) -> int:
        m = self.machine
        tape: dict = {}
        write_numeral(tape, 0, i)
        head, state = 0, m.start
        while state != m.halt:
            sym = tape.get(head, BLANK)
            rule = m.quads.get((state, sym))
            if rule is None:
                raise Divergence(f"oracle machine stuck in state {state} on {sym}")
            meter.charge(1)
            act, state = rule
            if act == "L":
                head -= 1
            elif act == "R":
                head += 1
            elif act == "?":
                idx, length = read_numeral(tape, head)
                if idx is None:
                    raise Divergence("oracle query without a numeral")
                for k in range(length):
                    tape.pop(head + k, None)
                v = x.entry(idx, meter)
                if v is HASH:
                    tape[head] = "#"
                else:
                    write_numeral(tape, head, int(v))
            else:
                tape[head] = act
        val, _ = read_numeral(tape, head)
        if val is None:
            raise Divergence("oracle machine halted without a numeral at the head")
        return val


_TM_CACHE: dict = {}


def _tm(text: str) -> OracleTM:
    tm = _TM_CACHE.get(text)
    if tm is None:
        tm = _TM_CACHE[text] = OracleTM(text)
    return tm


def _validate_tm(code, store):
    if not isinstance(code[1], str):
        raise MalformedFunctional("tm takes the program text")
    try:
        _tm(code[1])
    except MachineSyntaxError as exc:
        raise MalformedFunctional(str(exc)) from None


@builtin("tm", 1, "baire", _validate_tm)
def _tm_entry(code, x, i, meter):
    return _tm(code[1]).run(x, i, meter)


def tm_code(text: str):
    """Functional code for an oracle TM given by program text."""
    return ("tm", text)


# ------------------------------------------------------------- restricted slaves


@dataclass(frozen=True)
class SlaveRecord:
    slave: int
    task: Optional[int]
    steps: int
    finished: bool
    resumed_from: Optional[int]


class RestrictedRun:
    """Simulates slaves 0, 1, 2, ... on Phi^x(e) with budget 2^i for slave i."""

    def __init__(self, e, x: Stream):
        self.e = e
        self.x = x
        self.target = output_stream(e, x)
        self.entries: list = []
        self.log: list[SlaveRecord] = []
        self.task = 0
        self.spent = 0
        self.started_by: Optional[int] = None
        self.divergent_from: Optional[int] = None
        self.divergence_reason = ""
        self._lock = threading.RLock()
        self.stream = Stream(self._entry, "hash", None, 0, f"restricted({e})",
                             value_certificate=LazyCert(lambda: self.target.certificate))
        self.stream.run = self

    @property
    def tasks_done(self) -> int:
        return self.task

    def ensure(self, i: int):
        with self._lock:
            while len(self.entries) <= i:
                self._slave(len(self.entries))

    def _slave(self, i: int):
        budget = 1 << i
        if self.divergent_from is not None:
            self.entries.append(HASH)
            self.log.append(SlaveRecord(i, None, 0, False, None))
            return
        t = self.task
        resumed = self.started_by if self.spent else None
        try:
            r = self.target.query(t, self.spent + budget)
        except BeyondPrefix:
            r = DivergentCertified("oracle prefix exhausted")
        if isinstance(r, Value):
            cost = self.target.cost_of(t)
            used = cost - self.spent
            self.entries.append(r.value)
            self.log.append(SlaveRecord(i, t, used, True, resumed))
            self.task += 1
            self.spent = 0
            self.started_by = None
        elif isinstance(r, DivergentCertified):
            self.divergent_from = i
            self.divergence_reason = r.reason
            self.entries.append(HASH)
            self.log.append(SlaveRecord(i, t, 0, False, resumed))
        else:
            if not self.spent:
                self.started_by = i
            self.spent += budget
            self.entries.append(HASH)
            self.log.append(SlaveRecord(i, t, budget, False, resumed))

    def _entry(self, i: int, meter: Meter):
        self.ensure(i)
        meter.charge(1 + self.log[i].steps)
        return self.entries[i]


def restricted_run(e, x: Stream) -> Stream:
    """The hash stream Phi^x_#(e) (memoized per oracle)."""
    key = ("restricted", e)
    s = x.derived.get(key)
    if s is None:
        s = x.derived.setdefault(key, RestrictedRun(e, x).stream)
    return s


def restricted_slave_entry(e, x: Stream, i: int):
    """Entry written by slave i and the transcript of slaves 0..i."""
    run = restricted_run(e, x).run
    run.ensure(i)
    return run.entries[i], list(run.log[: i + 1])


def _zero_like(v) -> bool:
    return v is HASH or v == 0


def zero_from(cert) -> Optional[int]:
    """n0 such that a stream with this certificate is 0 or # from index n0 on."""
    if isinstance(cert, ZeroOrHash):
        return cert.n0
    if isinstance(cert, Eventually) and (cert.q is HASH or cert.q == 0):
        return cert.n0
    if isinstance(cert, CarrierCert):
        inner = zero_from(cert.w)
        return None if inner is None else 2 * inner
    return None


def chi_sharp(y: Stream, fuel: int, meter: Optional[Meter] = None):
    """Extended zero test: # counts as 0.

    Zero needs a certificate: a raw one on y, a certificate on the target of
    a restricted run once enough tasks have finished, or a certified
    divergent task.  When the target is a real stream, the k-th value v_k
    gives Nonzero once |v_k| >= 2^(1-k), and a certified limit of 0 gives Zero.
    """
    cert = y.certificate
    raw_bound = zero_from(cert)
    run = getattr(y, "run", None)
    vcert = y.value_certificate if run is not None else None
    real = run is not None and run.target.kind == "real"
    task_bound = None
    if real:
        if certified_limit(vcert) == 0:
            return Zero(vcert)
    elif run is not None:
        task_bound = zero_from(vcert)
    meter = meter if meter is not None else Meter(fuel)
    done = 0
    try:
        for j in itertools.count():
            meter.charge(1)
            if raw_bound is not None and j >= raw_bound:
                return Zero(cert)
            if task_bound is not None and done >= task_bound:
                return Zero(vcert)
            if run is not None and run.divergent_from is not None and j >= run.divergent_from:
                return Zero(("divergent", run.divergent_from, run.divergence_reason))
            v = y.entry(j, meter)
            if run is not None and run.log[j].finished:
                if real:
                    if abs(rat(v)) >= pow2(1 - done):
                        return Nonzero(j)
                elif not _zero_like(v):
                    return Nonzero(j)
                done += 1
            elif run is None and not _zero_like(v):
                return Nonzero(j)
    except OutOfFuel:
        pass
    except Divergence as exc:
        return DivergentCertified(str(exc))
    return Unknown()


# ------------------------------------------------------------- output reader


@builtin("uread", 1, None, lambda code, store: validate_code(code[1], store))
def _uread(code, x, n, meter):
    """n-th non-# component of the restricted run of code[1]."""
    y = restricted_run(code[1], x)
    run = y.run
    count = -1
    j = 0
    while True:
        if run.divergent_from is not None and j >= run.divergent_from:
            raise Divergence(f"restricted run diverges after {count + 1} values")
        v = y.entry(j, meter)
        if v is not HASH:
            count += 1
            if count == n:
                return v
        j += 1


@_uread.certifier
def _uread_cert(code, x, meter):
    return output_stream(code[1], x).certificate


# ------------------------------------------------------------- carrier streams
#
# Car(x, w) interleaves a work stream w (even places) with a copy of x coded
# over {0, #} (odd places): each binary digit b of x(m) becomes "0 0" or
# "0 #" and "# 0" ends the numeral.  A zero test on Car(x, w) only sees w,
# and a later slave can still decode x.


@dataclass(frozen=True)
class CarrierCert:
    x: Any
    w: Any


def _track_symbols(v: int) -> list:
    out = []
    for b in bin(v)[2:]:
        out += [0, HASH if b == "1" else 0]
    return out + [HASH, 0]


def carrier(x: Stream, w: Stream) -> Stream:
    track: list = []
    done = [0]

    def symbol(k, meter):
        while len(track) <= k:
            track.extend(_track_symbols(x.entry(done[0], meter)))
            done[0] += 1
        meter.charge(1)
        return track[k]

    def fn(i, meter):
        return w.entry(i // 2, meter) if i % 2 == 0 else symbol(i // 2, meter)

    s = Stream(fn, "hash", LazyCert(lambda: CarrierCert(x.certificate, w.certificate)),
               0, f"car({x.name}, {w.name})")
    s.derived["carried"] = x
    return s


def decode_carrier(y: Stream) -> Stream:
    """The stream carried on the odd places of y."""
    got = y.derived.get("decoded")
    if got is not None:
        return got
    values: list = []
    pos = [0]

    def fn(m, meter):
        while len(values) <= m:
            # advance pos only once a whole numeral is read, so running out
            # of fuel halfway leaves nothing half-consumed
            digits, k = "", pos[0]
            while True:
                a = y.entry(2 * k + 1, meter)
                b = y.entry(2 * k + 3, meter)
                k += 2
                if a is HASH:
                    break
                if a != 0 or (b != 0 and b is not HASH):
                    raise Divergence("carrier track is malformed")
                digits += "1" if b is HASH else "0"
            if not digits:
                raise Divergence("carrier track has an empty numeral")
            values.append(int(digits, 2))
            pos[0] = k
        return values[m]

    cert = y.certificate
    xc = cert.x if isinstance(cert, CarrierCert) else None
    inner = y.derived.get("carried")
    kind = inner.kind if inner is not None else "baire"
    return y.derived.setdefault("decoded", Stream(fn, kind, xc, 0, f"decode({y.name})"))


@builtin("carry-start", 0, "hash")
def _carry_start(code, x, i, meter):
    return _carrier_of(code, x).entry(i, meter)


@_carry_start.certifier
def _carry_start_cert(code, x, meter):
    return CarrierCert(x.certificate, Eventually(0, 0))


def _carrier_of(code, x: Stream) -> Stream:
    key = ("carrier", code)
    s = x.derived.get(key)
    if s is None:
        if code[0] == "carry-start":
            w = Stream(lambda i, m: 0, "baire", Eventually(0, 0), 0, "zeros")
            s = carrier(x, w)
        else:
            inner = decode_carrier(x)
            s = carrier(inner, output_stream(code[1], inner))
        s = x.derived.setdefault(key, s)
    return s


@builtin("carry", 1, "hash", lambda code, store: validate_code(code[1], store))
def _carry(code, x, i, meter):
    """Car(x', Phi^x'(f)) where x' is decoded from the carrier x."""
    return _carrier_of(code, x).entry(i, meter)


@_carry.certifier
def _carry_cert(code, x, meter):
    inner = decode_carrier(x)
    return CarrierCert(inner.certificate, output_stream(code[1], inner).certificate)


@builtin("tabulate", 1, "baire", _validate_lift)
def _tabulate(code, x, i, meter):
    """i -> f(i), ignoring the oracle."""
    meter.charge(1)
    return classical(code[1])(i)


# ------------------------------------------------------------- point stacks
#
# A stack state is Car(interleave(x, s_1, ..., s_m), top) with top = s_m (or
# zeros when m = 0).  Compiled schemes keep every point value they still
# need on this stack; a zero test on a state sees only the top.


def _validate_tuple(code, store):
    if len(code) < 2:
        raise MalformedFunctional("tuple needs at least one component")
    for part in code[1:]:
        validate_code(part, store)


@builtin("tuple", None, "baire", _validate_tuple)
def _tuple(code, x, i, meter):
    q = len(code) - 1
    return output_stream(code[1 + i % q], x).entry(i // q, meter)


@_tuple.certifier
def _tuple_cert(code, x, meter):
    return Components(tuple(output_stream(c, x).certificate for c in code[1:]))


_ZEROS = Stream(lambda i, m: 0, "baire", Eventually(0, 0), 0, "zeros")


def _state_of(parts: list) -> Stream:
    return carrier(interleave(*parts) if len(parts) > 1 else parts[0], parts[-1] if len(parts) > 1 else _ZEROS)


def stack_parts(y: Stream, m: int) -> list:
    """[x, s_1, ..., s_m] decoded from a stack state of depth m."""
    frame = decode_carrier(y)
    if m == 0:
        return [frame]
    return [output_stream(("component", m + 1, t), frame) for t in range(m + 1)]


def _stack_op(code, y: Stream) -> Stream:
    key = ("stack", code)
    got = y.derived.get(key)
    if got is not None:
        return got
    name = code[0]
    if name == "st-init":
        out = _state_of([y])
    else:
        m = code[1]
        parts = stack_parts(y, m)
        op = code[2] if name == "st-op" else None
        if name == "st-top":
            out = parts[-1] if m > 0 else _ZEROS
        elif op == "push-code":
            out = _state_of(parts + [output_stream(code[3], parts[0])])
        elif op == "apply":
            out = _state_of(parts[:-1] + [output_stream(code[3], parts[-1])])
        elif op == "pair":
            j = code[3]
            out = _state_of(parts[:-j] + [interleave(*parts[-j:])])
        elif op == "copy":
            out = _state_of(parts + [parts[code[3]]])
        elif op == "drop-under":
            j = code[3]
            out = _state_of(parts[:-1 - j] + [parts[-1]])
        elif op == "pop":
            out = _state_of(parts[:-1])
        else:
            raise MalformedFunctional(f"unknown stack operation {op!r}")
    return y.derived.setdefault(key, out)


def _validate_stack(code, store):
    name = code[0]
    if name == "st-init":
        return
    m = code[1] if len(code) > 1 else None
    if not isinstance(m, int) or m < 0:
        raise MalformedFunctional("stack operations take the stack depth first")
    if name == "st-top":
        return
    if len(code) != 4 or code[2] not in ("push-code", "apply", "pair", "copy", "drop-under", "pop"):
        raise MalformedFunctional(f"bad stack operation {code!r}")
    op, arg = code[2], code[3]
    if op in ("apply", "pop") and m == 0:
        raise MalformedFunctional("apply needs a nonempty stack")
    if op in ("push-code", "apply"):
        validate_code(arg, store)
    elif not isinstance(arg, int) or arg < 0:
        raise MalformedFunctional("stack operation argument must be a natural")
    elif op == "pair" and not 1 <= arg <= m:
        raise MalformedFunctional("cannot pair more values than the stack holds")
    elif op == "copy" and arg > m:
        raise MalformedFunctional("copy reaches below the stack")
    elif op == "drop-under" and arg + 1 > m:
        raise MalformedFunctional("drop-under reaches below the stack")


def _stack_entry(code, x, i, meter):
    return _stack_op(code, x).entry(i, meter)


def _stack_cert(code, x, meter):
    return _stack_op(code, x).certificate


def _stack_kind(code, x):
    return "baire" if code[0] == "st-top" else "hash"


for _name in ("st-init", "st-op", "st-top"):
    builtin(_name, None, _stack_kind, _validate_stack)(_stack_entry).certifier(_stack_cert)


STORE = Store()
