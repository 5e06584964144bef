"""Representation invariance over the reals: the intervals I_n, the dyadic
tree T_alpha, its live paths and the fine-tuned wrapper of a functional.

Tree paths only satisfy |d(i) - d(j)| < 2^-i, so functionals that are meant
to be fine-tuned must cope with that weaker modulus (the real builtins in
``tte`` read their oracle a few places ahead for this reason).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .cauchy import (BeyondPrefix, Divergence, DivergentCertified, Limit, Meter,
                     OutOfFuel, Stream, Unknown, Value, const_real, certified_limit,
                     is_cauchy_prefix, prefix_stream)
from .numerics import pow2, rat
from .tte import STORE, builtin, output_stream, validate_code

__all__ = [
    "interval_I", "TreeNode", "DyadicTree", "build_tree", "live_paths", "StageRecord",
    "fine_tuned_apply", "fine_tune_trace", "shift_output", "fine_tune_index",
    "stream_tree", "is_extensional",
]


def interval_I(prefix, n: int) -> tuple[Fraction, Fraction]:
    """[alpha(n+4) - 2^-(n+2), alpha(n+4) + 2^-(n+2)]."""
    if len(prefix) < n + 5:
        raise ValueError(f"I_{n} needs {n + 5} entries, got {len(prefix)}")
    c = rat(prefix[n + 4])
    r = pow2(-n - 2)
    return c - r, c + r


def _touching(lo: Fraction, hi: Fraction, level: int) -> list[Fraction]:
    """Left endpoints of the level-``level`` J-intervals meeting [lo, hi]."""
    scale = 1 << level
    first = math.ceil(lo * scale) - 1
    last = math.floor(hi * scale)
    return [Fraction(m, scale) for m in range(first, last + 1)
            if Fraction(m + 1, scale) >= lo and Fraction(m, scale) <= hi]


@dataclass
class TreeNode:
    label: Fraction
    level: int
    parent: Optional[int]
    live: bool = True
    children: list = field(default_factory=list)

    @property
    def status(self) -> str:
        return "live" if self.live else "dead"


class DyadicTree:
    """T_alpha built level by level; dead nodes are kept with their flag."""

    def __init__(self):
        self.nodes: list[TreeNode] = []
        self.levels: list[list[int]] = []
        self.stopped: Optional[str] = None
        self._cauchy: list = []       # longest prefix already known to be Cauchy

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def level(self, ell: int) -> list[TreeNode]:
        return [self.nodes[k] for k in self.levels[ell]]

    def live_labels(self, ell: int) -> list[Fraction]:
        return [n.label for n in self.level(ell) if n.live]

    def extend(self, prefix) -> bool:
        """Add one level from ``prefix``; False when construction has stopped."""
        if self.stopped:
            return False
        ell = len(self.levels)
        if ell > 0:
            head = list(prefix[: ell + 3])
            done = len(self._cauchy) if head[: len(self._cauchy)] == self._cauchy else 0
            if not is_cauchy_prefix(head, done):
                self.stopped = f"prefix of length {ell + 3} is not Cauchy"
                return False
            self._cauchy = head
        lo, hi = interval_I(prefix, ell)
        labels = _touching(lo, hi, ell)
        if ell == 0:
            parents = [None] * len(labels)
        else:
            live = {self.nodes[k].label: k for k in self.levels[-1] if self.nodes[k].live}
            parents = []
            for d in labels:
                up = Fraction(math.floor(d * (1 << (ell - 1))), 1 << (ell - 1))
                if up not in live:
                    self.stopped = f"level {ell} interval leaves the live part of the tree"
                    return False
                parents.append(live[up])
        row = []
        for d, p in zip(labels, parents):
            self.nodes.append(TreeNode(d, ell, p))
            k = len(self.nodes) - 1
            row.append(k)
            if p is not None:
                self.nodes[p].children.append(k)
        if ell > 0:
            for k in self.levels[-1]:
                if not self.nodes[k].children:
                    self.nodes[k].live = False
        self.levels.append(row)
        return True

    def path_to(self, k: int) -> list[Fraction]:
        out = []
        while k is not None:
            out.append(self.nodes[k].label)
            k = self.nodes[k].parent
        return out[::-1]

    def extending(self, ell: int) -> list[int]:
        """Nodes at level ell that have children (level ell + 1 must exist)."""
        return [k for k in self.levels[ell] if self.nodes[k].children]

    def render(self) -> str:
        lines = []
        for ell, row in enumerate(self.levels):
            for k in row:
                n = self.nodes[k]
                lines.append(f"{'  ' * ell}{ell} {n.label} {n.status}")
        if self.stopped:
            lines.append(f"stopped: {self.stopped}")
        return "\n".join(lines)


def build_tree(prefix, depth: int) -> DyadicTree:
    """T_alpha up to level ``depth`` from alpha restricted to depth + 5 entries."""
    prefix = [rat(v) for v in prefix]
    if len(prefix) < depth + 5:
        raise ValueError(f"depth {depth} needs {depth + 5} entries, got {len(prefix)}")
    tree = DyadicTree()
    for _ in range(depth + 1):
        if not tree.extend(prefix):
            break
    return tree


def live_paths(tree: DyadicTree) -> tuple[list, list]:
    """(delta_L, delta_R) through the leftmost and rightmost live deepest nodes."""
    if not tree.levels:
        raise ValueError("empty tree")
    row = [k for k in tree.levels[-1] if tree.nodes[k].live]
    return tree.path_to(row[0]), tree.path_to(row[-1])


def stream_tree(alpha: Stream, depth: int, meter: Meter) -> DyadicTree:
    """The tree of a stream, extended in place and cached on the stream."""
    state = alpha.derived.get("tree")
    if state is None:
        state = alpha.derived.setdefault("tree", (DyadicTree(), []))
    tree, prefix = state
    scratch = Meter(meter.remaining)
    while tree.depth < depth and not tree.stopped:
        need = tree.depth + 1 + 5
        while len(prefix) < need:
            prefix.append(rat(alpha.entry(len(prefix), scratch)))
        tree.extend(prefix)
    # charge the reads the tree up to ``depth`` depends on, cached or not
    for i in range(min(len(prefix), depth + 5)):
        alpha.entry(i, meter)
    return tree


# ------------------------------------------------------------- the wrapper


@dataclass(frozen=True)
class StageRecord:
    stage: int
    case: str          # "a", "b", "none", "stopped"
    outcome: str       # "accept" or the failing guard
    r: tuple = ()
    t: tuple = ()


def _path_stream(alpha: Stream, path) -> Stream:
    key = ("path", tuple(path))
    s = alpha.derived.get(key)
    if s is None:
        s = alpha.derived.setdefault(key, prefix_stream(path, "real"))
    return s


def _outputs(e, oracle: Stream, n: int, budget: int, meter: Meter):
    """M^oracle(0..n) within ``budget`` steps, or None."""
    sub = Meter(min(budget, meter.remaining))
    out = []
    try:
        stream = output_stream(e, oracle)
        for i in range(n + 1):
            out.append(rat(stream.entry(i, sub)))
    except (OutOfFuel, BeyondPrefix, Divergence):
        meter.charge(min(sub.used, sub.limit))
        return None
    meter.charge(sub.used)
    return out


def _search(e, alpha: Stream, n: int, meter: Meter, trace: Optional[list] = None):
    s = 1
    while True:
        meter.charge(1)
        tree = stream_tree(alpha, s, meter)
        if tree.depth < s:
            if trace is not None:
                trace.append(StageRecord(s, "stopped", tree.stopped or "stopped"))
            raise Divergence(f"oracle is not Cauchy: {tree.stopped}")
        ext = tree.extending(s - 1)
        paths = [tree.path_to(k) for k in ext]
        budget = 1 << s
        if len(paths) == 1:
            r = _outputs(e, _path_stream(alpha, paths[0]), n, budget, meter)
            if r is None:
                outcome = "pending"
            elif not is_cauchy_prefix(r):
                outcome = "outputs not Cauchy"
            else:
                outcome = "accept"
            if trace is not None:
                trace.append(StageRecord(s, "a", outcome, tuple(r or ())))
            if outcome == "accept":
                return r[n]
        elif len(paths) == 2:
            r = _outputs(e, _path_stream(alpha, paths[0]), n, budget, meter)
            t = _outputs(e, _path_stream(alpha, paths[1]), n, budget, meter) if r is not None else None
            if r is None or t is None:
                outcome = "pending"
            elif not is_cauchy_prefix(r) or not is_cauchy_prefix(t):
                outcome = "outputs not Cauchy"
            elif any(abs(a - b) > pow2(-i) for i, (a, b) in enumerate(zip(r, t))):
                outcome = "paths disagree"
            else:
                outcome = "accept"
            if trace is not None:
                trace.append(StageRecord(s, "b", outcome, tuple(r or ()), tuple(t or ())))
            if outcome == "accept":
                return (r[n] + t[n]) / 2
        elif trace is not None:
            trace.append(StageRecord(s, "none", "no extending node"))
        s += 1


def fine_tuned_apply(e, alpha: Stream, n: int, fuel: int):
    """Entry n of the fine-tuned (unshifted) output, as a PartialResult."""
    meter = Meter(fuel)
    try:
        return Value(_search(e, alpha, n, meter))
    except OutOfFuel:
        return Unknown()
    except Divergence as exc:
        return DivergentCertified(str(exc))


def fine_tune_trace(e, alpha: Stream, n: int, fuel: int) -> list[StageRecord]:
    """Stage-by-stage guard evaluation of the wrapper."""
    trace: list = []
    try:
        _search(e, alpha, n, Meter(fuel), trace)
    except (OutOfFuel, Divergence):
        pass
    return trace


def shift_output(a: Stream) -> Stream:
    """b(n) = a(n + 2)."""
    return Stream(lambda n, m: a.entry(n + 2, m), a.kind, a._certificate, 0, f"shift({a.name})")


# ------------------------------------------------------------- as a functional

_EXTENSIONAL = {"real-id", "affine", "real-const", "pl", "finetune", "real-absdiff"}


def is_extensional(code) -> bool:
    """Whether a code is known to compute a function of the represented real."""
    while isinstance(code, int):
        code = STORE.lookup(code)
    if code[0] in ("smn", "compose", "gsharp"):
        return is_extensional(code[1]) and is_extensional(code[2])
    return code[0] in _EXTENSIONAL


def _validate_finetune(code, store):
    validate_code(code[1], store)


@builtin("finetune", 1, "real", _validate_finetune)
def _finetune(code, x, n, meter):
    return _search(code[1], x, n + 2, meter)


@_finetune.certifier
def _finetune_cert(code, x, meter):
    q = certified_limit(x.certificate)
    if q is None or not is_extensional(code[1]):
        return None
    y = certified_limit(output_stream(code[1], const_real(q)).certificate)
    return None if y is None else Limit(y)


def fine_tune_index(e) -> int:
    """Index g(e) of the fine-tuned, shifted version of e."""
    return STORE.intern(("finetune", e))
