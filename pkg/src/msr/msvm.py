"""Master-slave machines: programs, coded configurations, the yields relation
and traced runs.

A master has one tape.  The billboard p read by a slave call is the binary
numeral at the head; a zero test stores its bit k in the configuration and
also writes it at the head ("1" when the slaves' output is zero).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .cauchy import (DivergentCertified, Meter, Nonzero, OutOfFuel, Stream, Unknown,
                     Value, Zero)
from .numerics import decode_seq, encode_seq, unzigzag, zigzag, MalformedCode
from . import finetune as _finetune, sets as _sets  # noqa: F401  (register builtins)
from .sexp import to_sexp
from .tte import (BLANK, C0, STORE, MachineSyntaxError, MalformedFunctional, MachineText, chi_sharp, g_sharp,
                  family_lookup, output_stream, parse_machine_text, resolve, restricted_run,
                  write_numeral)

__all__ = [
    "MasterProgram", "MsConfiguration", "Snapshot", "RunOutcome", "Trace", "StuckError",
    "parse_program", "serialize_program", "initial_config", "yields", "step", "run",
    "encode_snapshot", "decode_snapshot", "program_index", "program_from_index",
    "StepRecord",
]

UNSET = 2


class StuckError(RuntimeError):
    """No quadruple applies: a bug in the program, not a divergence."""


class MasterProgram:
    def __init__(self, machine: MachineText, text: str = ""):
        self.machine = machine
        self.text = text
        for sym in ("0", "1"):
            if sym not in machine.alphabet:
                raise MachineSyntaxError(f"master alphabets must contain {sym!r}")
        states = [machine.start, machine.halt]
        for q, _ in machine.order:
            for s in (q, machine.quads[(q, _)][1]):
                if s not in states:
                    states.append(s)
        self.states = states
        self.symbols = list(machine.alphabet)
        self.state_index = {q: k for k, q in enumerate(states)}
        self.symbol_index = {a: k for k, a in enumerate(self.symbols)}
        self._handles: dict = {}

    @property
    def name(self) -> str:
        return self.machine.name

    @property
    def codomain(self) -> str:
        return self.machine.codomain

    @property
    def table(self) -> dict:
        return self.machine.functionals

    def handle(self, p: Optional[int], fine_tuned: bool) -> Optional[int]:
        """Store handle of table entry p (None when the entry is missing)."""
        key = (p, fine_tuned)
        if key not in self._handles:
            code = self.table.get(p) if p is not None else None
            fams = self.table.get("*")
            if code is None and fams and p is not None:
                code = family_lookup(fams, p)
                if isinstance(code, int) and not 0 <= code < len(STORE):
                    code = None
            if code is None:
                self._handles[key] = None
            elif isinstance(code, int) and not fine_tuned:
                self._handles[key] = code
            else:
                try:
                    if fine_tuned and resolve(code)[0] != "finetune":
                        code = ("finetune", code)
                    self._handles[key] = STORE.intern(code)
                except MalformedFunctional:
                    # a family member naming an unregistered functional
                    self._handles[key] = None
        return self._handles[key]

    def __eq__(self, other):
        if not isinstance(other, MasterProgram):
            return NotImplemented
        a, b = self.machine, other.machine
        return (a.start, a.halt, a.alphabet, a.quads, a.functionals, a.codomain) == \
               (b.start, b.halt, b.alphabet, b.quads, b.functionals, b.codomain)


def parse_program(text: str) -> MasterProgram:
    return MasterProgram(parse_machine_text(text, master=True), text)


def serialize_program(prog: MasterProgram) -> str:
    m = prog.machine
    out = []
    if m.name:
        out.append(f".name {m.name}")
    out += [f".start {m.start}", f".halt {m.halt}", ".alphabet " + " ".join(m.alphabet)]
    if m.codomain != "nat":
        out.append(f".codomain {m.codomain}")
    for k in sorted(k for k in m.functionals if k != "*"):
        out.append(f".fn {k} {to_sexp(m.functionals[k])}")
    for base, stride, template in m.functionals.get("*", ()):
        out.append(f".fn-family {base} {stride} {to_sexp(template)}")
    for key in m.order:
        act, nxt = m.quads[key]
        q, a = key
        out.append(f"{q} {a if a is not None else BLANK} {act} {nxt}")
    return "\n".join(out) + "\n"


def program_index(prog: MasterProgram) -> int:
    """The natural number coding a program (its canonical text as bytes)."""
    return int.from_bytes(b"\x01" + serialize_program(prog).encode(), "big")


def program_from_index(e: int) -> MasterProgram:
    raw = e.to_bytes((e.bit_length() + 7) // 8, "big")
    if not raw or raw[0] != 1:
        raise MalformedCode(f"{e} is not a program index")
    return parse_program(raw[1:].decode())


# ------------------------------------------------------------- configurations


@dataclass(frozen=True)
class Snapshot:
    """The master part: state, head, the tape from cell ``lo`` (trimmed) and the bit."""

    state: str
    head: int
    lo: int
    cells: tuple
    bit: int = UNSET

    def symbol(self, pos: int) -> str:
        k = pos - self.lo
        return self.cells[k] if 0 <= k < len(self.cells) else BLANK

    def tape_dict(self) -> dict:
        return {self.lo + k: v for k, v in enumerate(self.cells) if v != BLANK}

    def numeral(self) -> Optional[int]:
        digits = []
        k = self.head - self.lo
        while 0 <= k < len(self.cells) and self.cells[k] in ("0", "1"):
            digits.append(self.cells[k])
            k += 1
        return int("".join(digits), 2) if digits else None

    def written(self, sym: str) -> "Snapshot":
        k = self.head - self.lo
        if 0 <= k < len(self.cells):
            cells = self.cells[:k] + (sym,) + self.cells[k + 1:]
            return _trimmed(self.state, self.head, self.lo, cells, self.bit)
        if sym == BLANK:
            return self
        if not self.cells:
            return Snapshot(self.state, self.head, self.head, (sym,), self.bit)
        if k < 0:
            return Snapshot(self.state, self.head, self.head, (sym,) + (BLANK,) * (-k - 1) + self.cells, self.bit)
        return Snapshot(self.state, self.head, self.lo,
                        self.cells + (BLANK,) * (k - len(self.cells)) + (sym,), self.bit)

    def moved(self, state: str, head: Optional[int] = None, bit: Optional[int] = None) -> "Snapshot":
        return Snapshot(state, self.head if head is None else head, self.lo, self.cells,
                        self.bit if bit is None else bit)


def _trimmed(state, head, lo, cells, bit) -> Snapshot:
    a, b = 0, len(cells)
    while a < b and cells[a] == BLANK:
        a += 1
    while b > a and cells[b - 1] == BLANK:
        b -= 1
    if a == b:
        return Snapshot(state, head, 0, (), bit)
    return Snapshot(state, head, lo + a, tuple(cells[a:b]), bit)


def _snap(state, head, tape: dict, bit) -> Snapshot:
    cells = {k: v for k, v in tape.items() if v != BLANK}
    if not cells:
        return Snapshot(state, head, 0, (), bit)
    lo, hi = min(cells), max(cells)
    return Snapshot(state, head, lo, tuple(cells.get(k, BLANK) for k in range(lo, hi + 1)), bit)


def encode_snapshot(prog: MasterProgram, snap: Snapshot) -> int:
    idx = prog.symbol_index
    return encode_seq([prog.state_index[snap.state], zigzag(snap.head), snap.bit, zigzag(snap.lo)]
                      + [idx[s] for s in snap.cells])


def decode_snapshot(prog: MasterProgram, n: int) -> Snapshot:
    seq = decode_seq(n)
    if len(seq) < 4:
        raise MalformedCode(f"{n} is not a configuration code")
    st, hd, bit, lo = seq[:4]
    if st >= len(prog.states) or bit > UNSET or any(s >= len(prog.symbols) for s in seq[4:]):
        raise MalformedCode(f"{n} is not a configuration of this program")
    snap = Snapshot(prog.states[st], unzigzag(hd), unzigzag(lo), tuple(prog.symbols[s] for s in seq[4:]), bit)
    if _trimmed(snap.state, snap.head, snap.lo, snap.cells, bit) != snap:
        raise MalformedCode(f"{n} is not a canonical configuration code")
    return snap


class MsConfiguration:
    """(n, c; x): the coded master snapshot, the TTE component and the oracle."""

    __slots__ = ("snap", "c", "oracle", "prog", "_n")

    def __init__(self, snap: Snapshot, c: int, oracle: Stream, prog: MasterProgram):
        self.snap, self.c, self.oracle, self.prog, self._n = snap, c, oracle, prog, None

    @property
    def n(self) -> int:
        if self._n is None:
            self._n = encode_snapshot(self.prog, self.snap)
        return self._n

    def __eq__(self, other):
        return isinstance(other, MsConfiguration) and (self.snap, self.c) == (other.snap, other.c)

    def __hash__(self):
        return hash((self.snap, self.c))

    def __repr__(self):
        return f"MsConfiguration(n={self.n}, c={self.c})"


def initial_config(prog: MasterProgram, naturals=(), oracle: Stream = None) -> MsConfiguration:
    """State q_s, the naturals as blank-separated binary numerals from cell 0, c = c0."""
    tape: dict = {}
    pos = 0
    for v in naturals:
        if v < 0:
            raise ValueError("numeric inputs are naturals")
        write_numeral(tape, pos, v)
        pos += len(bin(v)) - 1
    return MsConfiguration(_snap(prog.machine.start, 0, tape, UNSET), C0, oracle, prog)


# ------------------------------------------------------------- yields


class StepRecord:
    """One step of a run: its kind ("master", "slave", "ztest", "halt"), the
    configuration it started from and the billboard or zero-test verdict."""

    __slots__ = ("kind", "config", "evidence")

    def __init__(self, kind: str, config: MsConfiguration, evidence=None):
        self.kind, self.config, self.evidence = kind, config, evidence

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def c(self) -> int:
        return self.config.c


class _SlavePartial(Exception):
    pass


def _fine_tuned(prog: MasterProgram, oracle: Stream, fine_tuned):
    if fine_tuned is None:
        return oracle is not None and oracle.kind == "real"
    return fine_tuned


def step(config: MsConfiguration, prog: MasterProgram, meter: Meter, fine_tuned=None):
    """One yields step; returns (next configuration, StepRecord)."""
    snap = config.snap
    m = prog.machine
    if snap.state == m.halt:
        raise ValueError("terminal configurations do not yield")
    meter.charge(1)
    if snap.state == "S":
        _, nxt = m.quads[("S", None)]
        p = snap.numeral()
        h = prog.handle(p, _fine_tuned(prog, config.oracle, fine_tuned))
        if h is None:
            raise _SlavePartial(f"billboard {p} names no functional")
        new = MsConfiguration(snap.moved(nxt), g_sharp(h, config.c), config.oracle, prog)
        return new, StepRecord("slave", config, p)
    if snap.state == "E":
        _, nxt = m.quads[("E", None)]
        verdict = chi_sharp(restricted_run(config.c, config.oracle), 0, meter)
        if isinstance(verdict, Zero):
            cert = verdict.certificate
            if isinstance(cert, tuple) and cert and cert[0] == "divergent":
                raise _SlavePartial(f"slave task {cert[1]} diverges: {cert[2]}")
            bit = 1
        elif isinstance(verdict, Nonzero):
            bit = 0
        elif isinstance(verdict, DivergentCertified):
            raise _SlavePartial(verdict.reason)
        else:
            raise OutOfFuel("zero test undecided")
        new = MsConfiguration(snap.written(str(bit)).moved(nxt, bit=bit), config.c, config.oracle, prog)
        return new, StepRecord("ztest", config, verdict)
    sym = snap.symbol(snap.head)
    rule = m.quads.get((snap.state, sym))
    if rule is None:
        raise StuckError(f"no quadruple for state {snap.state} reading {sym}")
    act, nxt = rule
    if act == "L":
        new = snap.moved(nxt, snap.head - 1)
    elif act == "R":
        new = snap.moved(nxt, snap.head + 1)
    else:
        new = snap.written(act).moved(nxt)
    return MsConfiguration(new, config.c, config.oracle, prog), StepRecord("master", config)


def yields(config: MsConfiguration, prog: MasterProgram, fuel: int, fine_tuned=None):
    """Value(next configuration), Unknown, or DivergentCertified for a partial slave."""
    try:
        nxt, _ = step(config, prog, Meter(fuel), fine_tuned)
        return Value(nxt)
    except OutOfFuel:
        return Unknown("fuel exhausted")
    except _SlavePartial as exc:
        return DivergentCertified(str(exc))


# ------------------------------------------------------------- runs


@dataclass
class Trace:
    master_steps: int = 0
    slave_calls: int = 0
    zero_tests: int = 0
    steps: list = field(default_factory=list)   # StepRecords, then the final (n, c)

    def counts(self) -> dict:
        return {"master": self.master_steps, "slave": self.slave_calls, "ztest": self.zero_tests}

    def configs(self) -> list:
        return [(r.n, r.c) for r in self.steps]


@dataclass
class RunOutcome:
    status: str               # "halt", "slave-partial" or "unknown"
    output: object = None     # natural, or an output Stream for point codomains
    trace: Trace = field(default_factory=Trace)
    reason: str = ""
    final: Optional[MsConfiguration] = None

    @property
    def halted(self) -> bool:
        return self.status == "halt"


def halt_output(prog: MasterProgram, config: MsConfiguration):
    if prog.codomain == "point":
        return output_stream(("uread", config.c), config.oracle)
    val = config.snap.numeral()
    if val is None:
        raise StuckError("halted without a numeral at the head")
    return val


def run(prog: MasterProgram, naturals=(), oracle: Stream = None, fuel: int = 10_000,
        fine_tuned=None) -> RunOutcome:
    """Iterate yields from the initial configuration under a total step budget."""
    if isinstance(prog, str):
        prog = parse_program(prog)
    config = initial_config(prog, naturals, oracle)
    meter = Meter(fuel)
    trace = Trace()
    halt = prog.machine.halt
    while True:
        if config.snap.state == halt:
            trace.steps.append(StepRecord("halt", config))
            return RunOutcome("halt", halt_output(prog, config), trace, final=config)
        try:
            nxt, rec = step(config, prog, meter, fine_tuned)
        except OutOfFuel as exc:
            return RunOutcome("unknown", None, trace, str(exc) or "fuel exhausted", config)
        except _SlavePartial as exc:
            return RunOutcome("slave-partial", None, trace, str(exc), config)
        trace.steps.append(rec)
        if rec.kind == "master":
            trace.master_steps += 1
        elif rec.kind == "slave":
            trace.slave_calls += 1
        else:
            trace.zero_tests += 1
        config = nxt
