"""The ``msr`` command.

Exit codes: 0 for a definite answer, 2 when the answer is Unknown or a slave
went partial, 1 for usage and input errors.
"""

import argparse
import sys
from pathlib import Path

from . import corpus
from .cauchy import (Value, DivergentCertified, Zero, Nonzero, Meter, OutOfFuel, StreamFormatError,
                     load_stream, zero_test_real, zero_test_baire)
from .finetune import stream_tree
from .msvm import parse_program, serialize_program, program_index, run
from .normalform import (T_check, build_gamma, code_text, extract_decomposition, nf_run,
                         real_decomposition, witness_from_trace)
from .numerics import format_rational
from .schemes import (SchemeTypeError, CompileError, compile_scheme, evaluate, parse_scheme,
                      typecheck)
from .sets import Member, NotMember, SetCodeError, load_set_code, member
from .tte import MachineSyntaxError, MalformedFunctional, interleave

DEFINITE, INPUT_ERROR, UNDECIDED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


INPUT_ERRORS = (OSError, ValueError, StreamFormatError, MachineSyntaxError, MalformedFunctional,
                SetCodeError, SchemeTypeError, CompileError)


# ------------------------------------------------------------- output

class Out:
    """Collects (text line, machine record) pairs and prints one of them."""

    def __init__(self, fmt: str):
        self.fmt = fmt
        self.lines = []

    def emit(self, text: str, **record):
        if self.fmt == "machine":
            self.lines.extend(f"{k}={_fmt(v)}" for k, v in record.items())
        elif text is not None:
            self.lines.append(text)

    def row(self, text: str, **record):
        """One multi-field record on a single line."""
        if self.fmt == "machine":
            self.lines.append(" ".join(f"{k}={_fmt(v)}" for k, v in record.items()))
        else:
            self.lines.append(text)

    def write(self, stream):
        for line in self.lines:
            print(line, file=stream)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    if v is None:
        return ""
    if not isinstance(v, (int, str)):
        return format_rational(v)
    return str(v)


def _counts_text(counts: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in counts.items())


def _point_prefix(stream, n: int, fuel: int):
    """Entries 0..n of a Baire output, or the first non-Value result."""
    vals = []
    for i in range(n + 1):
        r = stream.query(i, fuel)
        if not isinstance(r, Value):
            return vals, r
        vals.append(r.value)
    return vals, None


# ------------------------------------------------------------- loading

def _load_program(path: str):
    text = Path(path).read_text()
    if path.endswith(".scm"):
        text = compile_scheme(parse_scheme(text), Path(path).stem)
    return parse_program(text)


def _load_stream(path: str):
    return load_stream(Path(path).read_text(), path)


def _oracle(paths):
    streams = [_load_stream(p) for p in paths or ()]
    if not streams:
        return None
    return streams[0] if len(streams) == 1 else interleave(*streams)


# ------------------------------------------------------------- commands

def outcome_line(outcome, precision: int, fuel: int) -> tuple:
    """(text, record) for a RunOutcome; shared with corpus replay."""
    if outcome.status == "halt":
        if isinstance(outcome.output, int):
            return f"halt {outcome.output}", {"status": "halt", "output": outcome.output}
        vals, stop = _point_prefix(outcome.output, precision, fuel)
        rec = {"status": "halt", "point": vals}
        if stop is not None:
            rec["stopped"] = type(stop).__name__.lower()
        return "halt point " + " ".join(map(str, vals)), rec
    return f"{outcome.status} {outcome.reason}".rstrip(), {"status": outcome.status,
                                                           "reason": outcome.reason}


def cmd_assemble(args, out: Out) -> int:
    prog = _load_program(args.program)
    m = prog.machine
    e = program_index(prog)
    out.emit(serialize_program(prog).rstrip("\n"), name=m.name, start=m.start, halt=m.halt,
             codomain=m.codomain, quadruples=len(m.quads),
             functionals=len([k for k in m.functionals if k != "*"]),
             index_bits=e.bit_length())
    return DEFINITE


def cmd_run(args, out: Out) -> int:
    prog = _load_program(args.program)
    x = _oracle(args.input)
    if args.nf:
        o = nf_run(prog, x, args.fuel, args.nat)
    else:
        o = run(prog, args.nat, x, args.fuel)
    text, rec = outcome_line(o, args.precision, args.fuel)
    rec.update(o.trace.counts())
    out.emit(text, **{k: v for k, v in rec.items() if k in ("status", "output", "point", "reason")})
    out.emit(_counts_text(o.trace.counts()), **o.trace.counts())
    if args.check and o.halted:
        w = o.witness if args.nf else witness_from_trace(o.trace)
        r = T_check(prog, x, w, args.fuel, args.nat)
        ok = isinstance(r, Value) and r.value
        out.emit(f"witness {'ok' if ok else 'rejected'}", witness=ok)
    return DEFINITE if o.halted else UNDECIDED


def cmd_eval(args, out: Out) -> int:
    ast = parse_scheme(Path(args.scheme).read_text())
    typecheck(ast)
    points = [_load_stream(p) for p in args.input or ()]
    r = evaluate(ast, args.nat, points, args.fuel)
    text, rec, code = eval_line(r, args.precision, args.fuel)
    out.emit(text, **rec)
    return code


def eval_line(r, precision: int, fuel: int) -> tuple:
    if isinstance(r, DivergentCertified):
        return f"divergent {r.reason}", {"status": "divergent", "reason": r.reason}, DEFINITE
    if not isinstance(r, Value):
        return f"unknown {r.reason}".rstrip(), {"status": "unknown", "reason": r.reason}, UNDECIDED
    v = r.value
    if isinstance(v, int):
        return f"value {v}", {"status": "value", "value": v}, DEFINITE
    if v.kind == "real":
        # Real outputs are fast Cauchy, so entry n is within 2^-n of the limit.
        a = v.query(precision, fuel)
        if not isinstance(a, Value):
            return "unknown output entry not reached", {"status": "unknown"}, UNDECIDED
        return (f"value {format_rational(a.value)}",
                {"status": "value", "value": a.value, "precision": precision}, DEFINITE)
    vals, stop = _point_prefix(v, precision, fuel)
    if stop is not None:
        return "unknown output entry not reached", {"status": "unknown", "point": vals}, UNDECIDED
    return "value point " + " ".join(map(str, vals)), {"status": "value", "point": vals}, DEFINITE


def cmd_member(args, out: Out) -> int:
    code = load_set_code(Path(args.set).read_text())
    path = args.real or args.baire
    x = _load_stream(path)
    if (args.real is not None) != (code.space == "real"):
        raise ValueError(f"{args.set} is a set of {'reals' if code.space == 'real' else 'Baire points'}")
    ans = member(code, x, args.fuel)
    if isinstance(ans, Member):
        out.emit("member", status="member")
        return DEFINITE
    if isinstance(ans, NotMember):
        out.emit("not-member", status="not-member")
        return DEFINITE
    reason = getattr(ans, "reason", "")
    out.emit(f"unknown {reason}".rstrip(), status="unknown", reason=reason)
    return UNDECIDED


def cmd_zero_test(args, out: Out) -> int:
    x = _load_stream(args.stream)
    test = zero_test_real if x.kind == "real" else zero_test_baire
    v = test(x, args.fuel)
    if isinstance(v, Zero):
        out.emit("zero", status="zero")
    elif isinstance(v, Nonzero):
        out.emit(f"nonzero {v.witness}", status="nonzero", witness=v.witness)
    elif isinstance(v, DivergentCertified):
        out.emit(f"divergent {v.reason}", status="divergent", reason=v.reason)
    else:
        out.emit("unknown", status="unknown", reason=getattr(v, "reason", ""))
        return UNDECIDED
    return DEFINITE


def cmd_tree(args, out: Out) -> int:
    x = _load_stream(args.stream)
    try:
        tree = stream_tree(x, args.depth, Meter(args.fuel))
    except OutOfFuel:
        out.emit("unknown fuel exhausted", status="unknown")
        return UNDECIDED
    for ell, row in enumerate(tree.levels):
        for k in row:
            n = tree.nodes[k]
            out.row(f"{'  ' * ell}{ell} {format_rational(n.label)} {n.status}",
                    level=ell, label=n.label, status=n.status)
    if tree.stopped:
        out.emit(f"stopped: {tree.stopped}", stopped=tree.stopped)
    return DEFINITE


def cmd_gamma(args, out: Out) -> int:
    g = build_gamma(_load_program(args.program), args.depth, args.nat)
    if out.fmt == "machine":
        for n in g.nodes:
            out.row("", id=n.id, parent=n.parent, branch=n.branch, kind=n.kind,
                    k=code_text(n.k), opens=len(n.opens), closeds=len(n.closeds))
    else:
        out.emit(g.render())
    return DEFINITE


def cmd_decompose(args, out: Out) -> int:
    prog = _load_program(args.program)
    if args.real:
        d = real_decomposition(prog, args.depth, args.budget, args.nat)
    else:
        d = extract_decomposition(prog, args.depth, args.nat)
    for p in d.pieces:
        out.row(p.describe(), piece=p.node, opens=len(p.opens), closeds=len(p.closeds),
                output=code_text(p.output))
    ok = d.pairwise_disjoint()
    out.emit(f"pairwise disjoint: {'yes' if ok else 'no'}", disjoint=ok)
    return DEFINITE


def replay(entry, precision: int = 3, fuel: int = 100_000) -> tuple:
    """(first output line, trace counts or None) for a corpus entry."""
    x = corpus.oracle_of(entry.inputs)
    if entry.kind == "program":
        o = run(corpus.program(entry.target), entry.naturals, x, fuel)
        return outcome_line(o, precision, fuel)[0], o.trace.counts()
    points = [corpus.stream(p) for p in entry.inputs]
    r = evaluate(corpus.scheme(entry.target), entry.naturals, points, fuel)
    return eval_line(r, precision, fuel)[0], None


def cmd_corpus(args, out: Out) -> int:
    chosen = [e for e in corpus.entries() if not args.names or e.name in args.names]
    if args.names and len(chosen) != len(set(args.names)):
        known = {e.name for e in corpus.entries()}
        raise ValueError("unknown corpus entries: " + " ".join(sorted(set(args.names) - known)))
    failed = 0
    for e in chosen:
        line, counts = replay(e, fuel=args.fuel)
        ok = line == e.expect and (e.counts is None or counts == e.counts)
        failed += not ok
        detail = "" if ok else f" (expected {e.expect!r}{', ' + _counts_text(e.counts) if e.counts else ''}; " \
                               f"got {line!r}{', ' + _counts_text(counts) if counts else ''})"
        out.row(f"{e.name} {'ok' if ok else 'FAIL'}{detail}", entry=e.name, ok=ok, got=line)
    out.emit(f"{len(chosen) - failed}/{len(chosen)} entries replayed as expected",
             passed=len(chosen) - failed, total=len(chosen))
    return DEFINITE if not failed else INPUT_ERROR


# ------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--fuel", type=int, default=10_000, metavar="N",
                        help="step budget (default 10000)")
    common.add_argument("--precision", type=int, default=10, metavar="n",
                        help="real outputs to within 2^-n; Baire outputs to entry n")
    common.add_argument("--format", choices=("text", "machine"), default="text")

    p = _Parser(prog="msr", description="Master-slave machines over Baire space and the reals.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="command")

    def add(name, fn, help_):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.set_defaults(fn=fn)
        return s

    def naturals(s):
        s.add_argument("--nat", type=int, action="append", default=[], metavar="K",
                       help="natural-number argument (repeatable)")

    s = add("assemble", cmd_assemble, "validate a program (.msr) or compile a scheme (.scm)")
    s.add_argument("program")
    s = add("run", cmd_run, "run a program on naturals and oracle streams")
    s.add_argument("program")
    naturals(s)
    s.add_argument("--input", action="append", metavar="STREAM",
                   help="oracle stream file; several are interleaved")
    s.add_argument("--nf", action="store_true", help="run through the normal form")
    s.add_argument("--check", action="store_true", help="re-verify the halting witness")
    s = add("eval", cmd_eval, "evaluate a scheme")
    s.add_argument("scheme")
    naturals(s)
    s.add_argument("--input", action="append", metavar="STREAM", help="point argument (repeatable)")
    s = add("member", cmd_member, "decide membership in a coded set")
    s.add_argument("--set", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--real", metavar="STREAM")
    g.add_argument("--baire", metavar="STREAM")
    s = add("zero-test", cmd_zero_test, "three-valued zero test of a stream")
    s.add_argument("stream")
    s = add("tree", cmd_tree, "render the dyadic tree of a real stream")
    s.add_argument("stream")
    s.add_argument("--depth", type=int, default=6)
    s = add("gamma", cmd_gamma, "render the computation tree of a program")
    s.add_argument("program")
    naturals(s)
    s.add_argument("--depth", type=int, default=40)
    s = add("decompose", cmd_decompose, "split a program's domain into labelled pieces")
    s.add_argument("program")
    naturals(s)
    s.add_argument("--depth", type=int, default=40)
    s.add_argument("--real", action="store_true", help="export pieces as real set codes")
    s.add_argument("--budget", type=int, default=7)
    s = add("corpus", cmd_corpus, "replay the bundled corpus")
    s.add_argument("names", nargs="*")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_help().rstrip())
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return INPUT_ERROR
    out = Out(args.format)
    try:
        code = args.fn(args, out)
    except INPUT_ERRORS as exc:
        out.write(sys.stdout)
        print(f"msr: error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    out.write(sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
