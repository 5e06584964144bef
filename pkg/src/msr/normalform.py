"""Arithmetized master-slave runs: the transition t on coded configurations,
a checkable T-predicate, the output reader U, the normal-form runner, the
computation tree Gamma and the decompositions read off it.

A configuration code is a pair (n, c): n codes the master snapshot and c is
the TTE component.  A witness is the chain of codes of a halting run plus
the evidence for every zero-test bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .cauchy import (HASH, DivergentCertified, Meter, OutOfFuel, Stream, Unknown, Value,
                     Zero, Nonzero, certified_limit)
from .numerics import MalformedCode, decode_pair, decode_seq, encode_pair, encode_seq, rat
from .msvm import (MasterProgram, RunOutcome, Trace, StepRecord, decode_snapshot,
                   encode_snapshot, initial_config, parse_program, program_from_index,
                   StuckError)
from .sexp import to_sexp
from .tte import (C0, STORE, chi_sharp, g_sharp, output_stream, resolve,
                  restricted_run, zero_from)

__all__ = [
    "ConfigCode", "KleeneWitness", "t_transition", "T_check", "U_read", "nf_run",
    "witness_from_trace", "GammaNode", "GammaTree", "build_gamma", "Piece", "Decomposition",
    "extract_decomposition", "real_decomposition", "code_text", "SlavePartialError",
]


class SlavePartialError(RuntimeError):
    """A slave call names no functional, so the run is undefined."""


@dataclass(frozen=True)
class ConfigCode:
    n: int
    c: int

    def pair(self) -> int:
        return encode_pair(self.n, self.c)


def _program(e) -> MasterProgram:
    if isinstance(e, MasterProgram):
        return e
    if isinstance(e, str):
        return parse_program(e)
    return program_from_index(e)


def _state(prog, n) -> str:
    return decode_snapshot(prog, n).state


def t_transition(code: ConfigCode, e, bit: Optional[int] = None, fine_tuned: bool = False) -> ConfigCode:
    """The configuration yielded by ``code``; a zero test takes its verdict as ``bit``."""
    prog = _program(e)
    snap, c = _t_step(prog, decode_snapshot(prog, code.n), code.c, bit, fine_tuned)
    return ConfigCode(encode_snapshot(prog, snap), c)


def _t_step(prog: MasterProgram, snap, c: int, bit, fine_tuned: bool):
    """t on a decoded master part: (next snapshot, next TTE index)."""
    m = prog.machine
    if snap.state == m.halt:
        raise ValueError("t is undefined on terminal configurations")
    if snap.state == "S":
        _, nxt = m.quads[("S", None)]
        p = snap.numeral()
        h = prog.handle(p, fine_tuned)
        if h is None:
            raise SlavePartialError(f"billboard {p} names no functional")
        return snap.moved(nxt), g_sharp(h, c)
    if snap.state == "E":
        if bit not in (0, 1):
            raise ValueError("a zero-test step needs its verdict bit")
        _, nxt = m.quads[("E", None)]
        return snap.written(str(bit)).moved(nxt, bit=bit), c
    sym = snap.symbol(snap.head)
    rule = m.quads.get((snap.state, sym))
    if rule is None:
        raise StuckError(f"no quadruple for state {snap.state} reading {sym}")
    act, nxt = rule
    if act in ("L", "R"):
        return snap.moved(nxt, snap.head + (1 if act == "R" else -1)), c
    return snap.written(act).moved(nxt), c


# ------------------------------------------------------------- witnesses


@dataclass(frozen=True)
class KleeneWitness:
    z: int
    etests: tuple = ()    # (bit, ("nonzero", j) | ("zero", certificate)) per zero test

    def chain(self) -> list[ConfigCode]:
        return [ConfigCode(*decode_pair(p)) for p in decode_seq(self.z)]

    @staticmethod
    def of(chain, etests=()) -> "KleeneWitness":
        return KleeneWitness(encode_seq([c.pair() for c in chain]), tuple(etests))


def witness_from_trace(trace: Trace, etests=None) -> KleeneWitness:
    """Replay an msvm trace (ending in a halt record) into a witness."""
    chain = [ConfigCode(r.n, r.c) for r in trace.steps]
    if etests is None:
        etests = []
        for r in trace.steps:
            if r.kind == "ztest":
                v = r.evidence
                etests.append((0, ("nonzero", v.witness)) if isinstance(v, Nonzero)
                              else (1, ("zero", v.certificate)))
    return KleeneWitness.of(chain, etests)


def _nonzero_at(y: Stream, j: int, fuel: int) -> Optional[bool]:
    """Whether entry j of a restricted run is a nonzero witness for chi_#."""
    meter = Meter(fuel)
    try:
        v = y.entry(j, meter)
    except OutOfFuel:
        return None
    run = y.run
    if not run.log[j].finished:
        return False
    if run.target.kind == "real":
        k = sum(1 for r in run.log[:j] if r.finished)
        return abs(rat(v)) >= Fraction(2) ** (1 - k)
    return not (v is HASH or v == 0)


def _zero_checks(y: Stream, cert, fuel: int) -> Optional[bool]:
    """Check that ``cert`` is the stream's own certificate and forces a zero verdict."""
    run = y.run
    meter = Meter(fuel)
    try:
        if cert == y.certificate and cert is not None:
            bound = zero_from(cert)
            if bound is None:
                return False
            return all(y.entry(j, meter) is HASH or y.entry(j, meter) == 0 for j in range(bound))
        if cert != y.value_certificate or cert is None:
            return False
        if run.target.kind == "real":
            return certified_limit(cert) == 0
        bound = zero_from(cert)
        if bound is None:
            return False
        j = 0
        done = 0
        while done < bound:
            v = y.entry(j, meter)
            if run.log[j].finished:
                if not (v is HASH or v == 0):
                    return False
                done += 1
            elif run.divergent_from is not None:
                return False
            j += 1
        return True
    except OutOfFuel:
        return None


def T_check(e, x: Stream, w: KleeneWitness, fuel: int, naturals=()):
    """Value(True) iff w is a halting computation of e on (naturals; x)."""
    try:
        prog = _program(e)
        chain = w.chain()
    except (MalformedCode, ValueError, UnicodeDecodeError):
        return Value(False)
    if not chain:
        return Value(False)
    fine = x is not None and x.kind == "real"
    first = initial_config(prog, naturals, x)
    if (chain[0].n, chain[0].c) != (first.n, C0):
        return Value(False)
    tests = list(w.etests)
    unknown = False
    halt = prog.machine.halt
    for i, cur in enumerate(chain):
        try:
            snap = decode_snapshot(prog, cur.n)
        except MalformedCode:
            return Value(False)
        state = snap.state
        if i == len(chain) - 1:
            return Value(state == halt and not tests) if not unknown else Unknown("zero certificate not checked")
        if state == halt or cur.c >= len(STORE):
            return Value(False)
        bit = None
        if state == "E":
            if not tests:
                return Value(False)
            bit, ev = tests.pop(0)
            y = restricted_run(cur.c, x)
            if bit == 0 and ev[0] == "nonzero":
                ok = _nonzero_at(y, ev[1], 10 ** 9)
            elif bit == 1 and ev[0] == "zero":
                ok = _zero_checks(y, ev[1], fuel)
            else:
                ok = False
            if ok is None:
                unknown = True
            elif not ok:
                return Value(False)
        try:
            nsnap, nc = _t_step(prog, snap, cur.c, bit, fine)
        except (StuckError, SlavePartialError, ValueError):
            return Value(False)
        if nc != chain[i + 1].c or encode_snapshot(prog, nsnap) != chain[i + 1].n:
            return Value(False)
    return Value(False)


def U_read(w: KleeneWitness, x: Stream, n: int, fuel: int):
    """The n-th non-# component of the restricted run of the last TTE index in w."""
    indices = []
    for cfg in w.chain():
        if not indices or indices[-1] != cfg.c:
            indices.append(cfg.c)
    meter = Meter(fuel)
    try:
        for c in indices[:-1]:
            run = restricted_run(c, x).run
            run.ensure(n)
            if run.divergent_from is not None:
                return DivergentCertified(f"earlier slave index diverges: {run.divergence_reason}")
        y = restricted_run(indices[-1], x)
        run = y.run
        count = -1
        j = 0
        while True:
            if run.divergent_from is not None and j >= run.divergent_from:
                return DivergentCertified(f"restricted run diverges: {run.divergence_reason}")
            v = y.entry(j, meter)
            if run.log[j].finished:
                count += 1
                if count == n:
                    return Value(v)
            j += 1
    except OutOfFuel:
        return Unknown("fuel exhausted")


def nf_run(e, x: Stream, fuel: int, naturals=()) -> RunOutcome:
    """F(x) = U(mu z. T(e, x, z); x).

    Valid witnesses are unique (t is a function and each verdict bit is
    forced), so the least one is found by following the t-orbit of the
    initial code and collecting the zero-test evidence on the way.
    """
    prog = _program(e)
    fine = x is not None and x.kind == "real"
    first = initial_config(prog, naturals, x)
    cur = ConfigCode(first.n, first.c)
    snap = first.snap
    chain = [cur]
    etests = []
    meter = Meter(fuel)
    trace = Trace()
    halt = prog.machine.halt
    try:
        while snap.state != halt:
            meter.charge(1)
            state = snap.state
            bit = None
            kind = "master"
            if state == "E":
                kind = "ztest"
                verdict = chi_sharp(restricted_run(cur.c, x), 0, meter)
                if isinstance(verdict, Nonzero):
                    bit, ev = 0, ("nonzero", verdict.witness)
                elif isinstance(verdict, Zero):
                    cert = verdict.certificate
                    if isinstance(cert, tuple) and cert and cert[0] == "divergent":
                        return RunOutcome("slave-partial", None, trace, f"slave task {cert[1]} diverges", None)
                    bit, ev = 1, ("zero", cert)
                elif isinstance(verdict, DivergentCertified):
                    return RunOutcome("slave-partial", None, trace, verdict.reason, None)
                else:
                    return RunOutcome("unknown", None, trace, "zero test undecided", None)
                etests.append((bit, ev))
            elif state == "S":
                kind = "slave"
            try:
                snap, c = _t_step(prog, snap, cur.c, bit, fine)
            except SlavePartialError as exc:
                return RunOutcome("slave-partial", None, trace, str(exc), None)
            nxt = ConfigCode(encode_snapshot(prog, snap), c)
            trace.steps.append(StepRecord(kind, cur))
            if kind == "master":
                trace.master_steps += 1
            elif kind == "slave":
                trace.slave_calls += 1
            else:
                trace.zero_tests += 1
            cur = nxt
            chain.append(cur)
    except OutOfFuel:
        return RunOutcome("unknown", None, trace, "fuel exhausted", None)
    trace.steps.append(StepRecord("halt", cur))
    w = KleeneWitness.of(chain, etests)
    ok = T_check(prog, x, w, max(meter.remaining, 1), naturals)
    if not (isinstance(ok, Value) and ok.value):
        return RunOutcome("unknown", None, trace, "witness did not check", None)
    if prog.codomain == "point":
        out = output_stream(("uread", cur.c), x)
    else:
        out = snap.numeral()
        if out is None:
            raise StuckError("halted without a numeral at the head")
    res = RunOutcome("halt", out, trace)
    res.witness = w
    return res


# ------------------------------------------------------------- Gamma


_CODE_ARGS = {"smn": (1, 2), "gsharp": (1, 2), "compose": (1, 2), "finetune": (1,),
              "carry": (1,), "uread": (1,)}


def _expand(code):
    if isinstance(code, int):
        return _expand(resolve(code))
    pos = _CODE_ARGS.get(code[0], ())
    return tuple(_expand(a) if i in pos else a for i, a in enumerate(code))


def code_text(h) -> str:
    """A store-independent rendering of a functional index."""
    return to_sexp(_expand(h))


@dataclass
class GammaNode:
    id: int
    parent: Optional[int]
    config: ConfigCode
    opens: tuple       # k with Phi_#(k) nonzero on the piece
    closeds: tuple     # k with Phi_#(k) zero-or-# on the piece
    kind: str = "step"   # step | split | terminal | partial | stuck | frontier
    branch: Optional[int] = None
    children: list = field(default_factory=list)
    depth: int = 0

    @property
    def k(self) -> int:
        return self.config.c


class GammaTree:
    def __init__(self, prog: MasterProgram):
        self.prog = prog
        self.nodes: list[GammaNode] = []

    def add(self, node: GammaNode) -> GammaNode:
        self.nodes.append(node)
        if node.parent is not None:
            self.nodes[node.parent].children.append(node.id)
        return node

    @property
    def root(self) -> GammaNode:
        return self.nodes[0]

    def terminals(self) -> list[GammaNode]:
        return [n for n in self.nodes if n.kind == "terminal"]

    def path(self, node_id: int) -> list[GammaNode]:
        out = []
        while node_id is not None:
            out.append(self.nodes[node_id])
            node_id = self.nodes[node_id].parent
        return out[::-1]

    def branch_points(self) -> list[GammaNode]:
        return [n for n in self.nodes if n.kind == "split"]

    def render(self) -> str:
        lines = []

        def walk(i, indent):
            n = self.nodes[i]
            st = _state(self.prog, n.config.n)
            tag = "" if n.branch is None else f"[bit {n.branch}] "
            labels = _label_text(n.opens, n.closeds)
            lines.append(f"{'  ' * indent}{tag}{n.id} {st} {n.kind} k={code_text(n.k)} {labels}")
            for ch in n.children:
                walk(ch, indent + 1)

        if self.nodes:
            walk(0, 0)
        return "\n".join(lines)


def _label_text(opens, closeds) -> str:
    o = " & ".join(f"NZ{code_text(k)}" for k in opens) or "everything"
    c = " & ".join(f"Z{code_text(k)}" for k in closeds) or "everything"
    return f"O=[{o}] C=[{c}]"


def build_gamma(e, depth: int, naturals=(), fine_tuned: bool = False) -> GammaTree:
    """The computation tree of e to ``depth`` steps; only zero tests branch."""
    prog = _program(e)
    tree = GammaTree(prog)
    first = initial_config(prog, naturals, None)
    tree.add(GammaNode(0, None, ConfigCode(first.n, C0), (), ()))
    todo = [0]
    halt = prog.machine.halt
    while todo:
        node = tree.nodes[todo.pop(0)]
        state = _state(prog, node.config.n)
        if state == halt:
            node.kind = "terminal"
            continue
        if node.depth >= depth:
            node.kind = "frontier"
            continue
        if state == "E":
            node.kind = "split"
            k = node.config.c
            for bit in (0, 1):
                cfg = t_transition(node.config, prog, bit, fine_tuned)
                opens = node.opens + ((k,) if bit == 0 else ())
                closeds = node.closeds + ((k,) if bit == 1 else ())
                child = tree.add(GammaNode(len(tree.nodes), node.id, cfg, opens, closeds,
                                           branch=bit, depth=node.depth + 1))
                todo.append(child.id)
            continue
        try:
            cfg = t_transition(node.config, prog, None, fine_tuned)
        except SlavePartialError:
            node.kind = "partial"
            continue
        except StuckError:
            node.kind = "stuck"
            continue
        child = tree.add(GammaNode(len(tree.nodes), node.id, cfg, node.opens, node.closeds,
                                   depth=node.depth + 1))
        todo.append(child.id)
    return tree


# ------------------------------------------------------------- decompositions


@dataclass
class Piece:
    node: int
    opens: tuple
    closeds: tuple
    output: int          # index k' of the output on this piece
    o_code: object = None
    c_code: object = None

    def describe(self) -> str:
        return f"piece {self.node}: {_label_text(self.opens, self.closeds)} output={code_text(self.output)}"


@dataclass
class Decomposition:
    tree: GammaTree
    pieces: list

    def disjointness_witness(self, a: Piece, b: Piece):
        """A k that is nonzero on one piece and zero on the other, or None."""
        for k in a.opens:
            if k in b.closeds:
                return k
        for k in b.opens:
            if k in a.closeds:
                return k
        return None

    def pairwise_disjoint(self) -> bool:
        ps = self.pieces
        return all(self.disjointness_witness(ps[i], ps[j]) is not None
                   for i in range(len(ps)) for j in range(i + 1, len(ps)))

    def piece_of(self, x: Stream, fuel: int):
        """Pieces whose labels x satisfies, by exact zero tests (None if undecided)."""
        verdicts: dict = {}

        def test(k):
            if k not in verdicts:
                verdicts[k] = chi_sharp(restricted_run(k, x), fuel)
            return verdicts[k]

        hits = []
        for p in self.pieces:
            vs = [test(k) for k in p.opens] + [test(k) for k in p.closeds]
            if any(not isinstance(v, (Zero, Nonzero)) for v in vs):
                return None
            if all(isinstance(test(k), Nonzero) for k in p.opens) and \
                    all(isinstance(test(k), Zero) for k in p.closeds):
                hits.append(p)
        return hits

    def render(self) -> str:
        return "\n".join(p.describe() for p in self.pieces)


def _output_index(prog: MasterProgram, node: GammaNode) -> int:
    if prog.codomain == "point":
        return STORE.intern(("uread", node.config.c))
    val = decode_snapshot(prog, node.config.n).numeral()
    return STORE.intern(("const", val if val is not None else 0))


def extract_decomposition(e, depth: int, naturals=(), fine_tuned: bool = False) -> Decomposition:
    """One piece O_i & C_j per terminal node of Gamma."""
    prog = _program(e)
    tree = build_gamma(prog, depth, naturals, fine_tuned)
    pieces = [Piece(n.id, n.opens, n.closeds, _output_index(prog, n)) for n in tree.terminals()]
    return Decomposition(tree, pieces)


def _underlying(k):
    """A functional with the same output stream as the restricted index k."""
    code = resolve(k)
    if code[0] == "gsharp":
        return STORE.intern(("smn", code[1], code[2]))
    return k


def _intersect_lists(a: list, b: list) -> list:
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if lo < hi:
                out.append((lo, hi))
    return out


def real_decomposition(e, depth: int, budget: int = 5, naturals=()) -> Decomposition:
    """Pieces over the reals as sigma1-real & pi1-real codes.

    Each NZ(k) is replaced by the finite part of its enumeration found within
    ``budget``; the closed code of a piece lists exactly the intervals its
    open partners use, so the exported pieces stay disjoint and cover R.
    """
    from .sets import SetCode, nonzero_open_index, open_union

    dec = extract_decomposition(e, depth, naturals, fine_tuned=True)
    enum: dict = {}

    def intervals(k):
        if k not in enum:
            code = nonzero_open_index(_underlying(k), budget)
            enum[k] = open_union(code.intervals())
        return enum[k]

    for p in dec.pieces:
        if p.opens:
            cur = intervals(p.opens[0])
            for k in p.opens[1:]:
                cur = _intersect_lists(cur, intervals(k))
            items = tuple(dict.fromkeys(((lo + hi) / 2, (hi - lo) / 2) for lo, hi in open_union(cur)))
            p.o_code = SetCode("sigma1-real", items) if items else SetCode("sigma1-real", ())
        else:
            p.o_code = SetCode("sigma1-real", (), "everything")
        comp = []
        for k in p.closeds:
            comp += intervals(k)
        items = tuple(dict.fromkeys(((lo + hi) / 2, (hi - lo) / 2) for lo, hi in open_union(comp)))
        p.c_code = SetCode("pi1-real", items)
    return dec
