"""Lazy memoized streams over Baire space, the #-extended space and fast
Cauchy representations of reals, with certified zero tests.

Every stream entry is produced under a step ``Meter``.  An entry's cost is
fixed the first time it is computed and charged again on every cache hit, so
``query(i, fuel)`` is deterministic and monotone in ``fuel``.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Optional, Sequence

from .numerics import format_rational, parse_rational, pow2, rat

__all__ = [
    "HASH", "OutOfFuel", "Divergence", "BeyondPrefix", "CertificateViolation",
    "StreamFormatError", "Meter", "Value", "Unknown", "DivergentCertified",
    "Zero", "Nonzero", "Eventually", "Limit", "ZeroOrHash", "Stream",
    "is_cauchy_prefix", "c_compatible", "enclosure", "zero_test_real",
    "zero_test_baire", "approx_equiv", "make_hash_extension", "nonhash_prefix",
    "certified_limit", "LazyCert", "Components", "const_real", "real_rep", "baire_stream", "real_stream",
    "prefix_stream", "load_stream", "dump_stream", "read_prefix",
]


class _Hash:
    __slots__ = ()

    def __repr__(self):
        return "#"

    __str__ = __repr__

    def __reduce__(self):
        return (_hash_singleton, ())


def _hash_singleton():
    return HASH


HASH = object.__new__(_Hash)


class OutOfFuel(Exception):
    """The step budget of a Meter is exhausted."""


class Divergence(Exception):
    """A computation is known never to produce the requested entry."""


class BeyondPrefix(Exception):
    """A finite oracle was read past its end."""


class CertificateViolation(Exception):
    """A stream's entries contradict its own certificate."""


class StreamFormatError(ValueError):
    pass


class Meter:
    __slots__ = ("limit", "used")

    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    @property
    def remaining(self) -> int:
        return self.limit - self.used

    def charge(self, steps: int = 1):
        self.used += steps
        if self.used > self.limit:
            raise OutOfFuel()


# ------------------------------------------------------------- results


@dataclass(frozen=True)
class Value:
    value: Any


@dataclass(frozen=True)
class Unknown:
    reason: str = "fuel exhausted"


@dataclass(frozen=True)
class DivergentCertified:
    reason: str


@dataclass(frozen=True)
class Zero:
    certificate: Any


@dataclass(frozen=True)
class Nonzero:
    witness: int


# ------------------------------------------------------------- certificates


@dataclass(frozen=True)
class Eventually:
    """Entry m equals q for every m >= n0."""

    q: Any
    n0: int


@dataclass(frozen=True)
class Limit:
    """The limit of the stream is exactly q."""

    q: Fraction


@dataclass(frozen=True)
class ZeroOrHash:
    """Every entry from index n0 on is 0 or #."""

    n0: int


def certified_limit(cert) -> Optional[Fraction]:
    if isinstance(cert, Limit):
        return cert.q
    if isinstance(cert, Eventually) and cert.q is not HASH:
        return rat(cert.q)
    return None


class LazyCert:
    """A deferred certificate derivation; failures yield no certificate."""

    __slots__ = ("fn",)

    def __init__(self, fn: Callable[[], Any]):
        self.fn = fn

    def force(self):
        try:
            return self.fn()
        except (OutOfFuel, Divergence, BeyondPrefix, CertificateViolation):
            return None


@dataclass(frozen=True)
class Components:
    """Certificates of the components of an interleaved tuple of streams."""

    parts: tuple


# ------------------------------------------------------------- streams


class Stream:
    """A memoized oracle ``i -> entry``.

    ``fn(i, meter)`` computes entry ``i``; it may charge ``meter`` for nested
    work and may raise ``Divergence``.  ``cost`` is charged once per fresh
    entry on top of whatever ``fn`` charges.
    """

    def __init__(self, fn: Callable[[int, Meter], Any], kind: str = "baire",
                 certificate=None, cost: int = 1, name: str = "",
                 value_certificate=None):
        if kind not in ("baire", "real", "hash"):
            raise ValueError(f"unknown stream kind {kind!r}")
        self.fn = fn
        self.kind = kind
        self._certificate = certificate
        self._value_certificate = value_certificate
        self.derived: dict = {}
        self.cost = cost
        self.name = name
        self._memo: dict[int, tuple[Any, int]] = {}
        self._diverged: dict[int, str] = {}
        self._lock = threading.RLock()

    def __repr__(self):
        return f"<{self.kind} stream {self.name or hex(id(self))}>"

    def entry(self, i: int, meter: Meter):
        if i < 0:
            raise IndexError(i)
        with self._lock:
            hit = self._memo.get(i)
            if hit is not None:
                meter.charge(hit[1])
                return hit[0]
            if i in self._diverged:
                raise Divergence(self._diverged[i])
            sub = Meter(meter.remaining)
            try:
                sub.charge(self.cost)
                v = self.fn(i, sub)
            except Divergence as exc:
                self._diverged[i] = str(exc)
                raise
            self._memo[i] = (v, sub.used)
        meter.charge(sub.used)
        return v

    def query(self, i: int, fuel: int):
        meter = Meter(fuel)
        try:
            return Value(self.entry(i, meter))
        except OutOfFuel:
            return Unknown()
        except Divergence as exc:
            return DivergentCertified(str(exc))

    def prefix(self, n: int, fuel: int):
        meter = Meter(fuel)
        try:
            return Value([self.entry(i, meter) for i in range(n)])
        except OutOfFuel:
            return Unknown()
        except Divergence as exc:
            return DivergentCertified(str(exc))

    def cached(self, n: int) -> list:
        """Entries 0..n-1 computed with an ample budget (raises on failure)."""
        meter = Meter(10 ** 12)
        return [self.entry(i, meter) for i in range(n)]

    @property
    def certificate(self):
        """The certificate, computed on first access when given as a LazyCert."""
        c = self._certificate
        if isinstance(c, LazyCert):
            c = self._certificate = c.force()
        return c

    @certificate.setter
    def certificate(self, cert):
        self._certificate = cert

    @property
    def value_certificate(self):
        c = self._value_certificate
        if isinstance(c, LazyCert):
            c = self._value_certificate = c.force()
        return c

    @value_certificate.setter
    def value_certificate(self, cert):
        self._value_certificate = cert

    def cost_of(self, i: int) -> Optional[int]:
        hit = self._memo.get(i)
        return None if hit is None else hit[1]

    @property
    def limit(self) -> Optional[Fraction]:
        return certified_limit(self.certificate)


def read_prefix(stream: Stream, n: int, meter: Meter) -> list:
    return [stream.entry(i, meter) for i in range(n)]


def baire_stream(fn: Callable[[int], int], certificate=None, cost: int = 1, name: str = "") -> Stream:
    return Stream(lambda i, m: fn(i), "baire", certificate, cost, name)


def real_stream(fn: Callable[[int], Fraction], certificate=None, cost: int = 1, name: str = "") -> Stream:
    return Stream(lambda i, m: rat(fn(i)), "real", certificate, cost, name)


def prefix_stream(entries: Sequence, kind: str = "real") -> Stream:
    """A finite oracle; reading past its end raises BeyondPrefix."""
    data = list(entries)

    def fn(i, meter):
        if i >= len(data):
            raise BeyondPrefix(i)
        return data[i]

    return Stream(fn, kind, None, 1, f"prefix{len(data)}")


def const_real(q, certified: bool = True) -> Stream:
    q = rat(q)
    return real_stream(lambda i: q, Eventually(q, 0) if certified else None,
                       name=f"const {format_rational(q)}")


def real_rep(q, seed: int = 0, spread: int = 3, certified: bool = True) -> Stream:
    """A pseudo-random fast Cauchy representation of the rational q.

    Entry i lies within 2**-(i+2) of q, which keeps every prefix fast Cauchy.
    """
    q = rat(q)
    rng_seed = (seed, q.numerator, q.denominator)

    def fn(i):
        r = random.Random(hash((rng_seed, i)))
        k = r.randint(-(1 << spread), 1 << spread)
        return q + Fraction(k, 1 << (i + 2 + spread))

    return real_stream(fn, Limit(q) if certified else None, name=f"rep {format_rational(q)}#{seed}")


# ------------------------------------------------------------- predicates


def is_cauchy_prefix(seq: Sequence, checked: int = 0) -> bool:
    """|q_i - q_j| < 2^-(i+1) for all i < j.

    Pairs inside the first ``checked`` entries are taken as already verified.
    """
    vals = [rat(v) for v in seq]
    for j in range(max(checked, 1), len(vals)):
        qj = vals[j]
        for i in range(j):
            if abs(vals[i] - qj) >= pow2(-i - 1):
                return False
    return True


def c_compatible(sigma: Sequence, tau: Sequence) -> bool:
    if not sigma or not tau:
        raise ValueError("C-compatibility needs two nonempty sequences")
    n, m = len(sigma), len(tau)
    return abs(rat(sigma[-1]) - rat(tau[-1])) < pow2(-n) + pow2(-m)


def enclosure(alpha: Stream, n: int, fuel: int):
    r = alpha.query(n, fuel)
    if not isinstance(r, Value):
        return r
    half = pow2(-n - 1)
    return Value((r.value - half, r.value + half))


def _check_limit(alpha: Stream, j: int, v: Fraction):
    lim = alpha.limit
    if isinstance(alpha.certificate, Limit) and abs(v - lim) > pow2(-j - 1):
        raise CertificateViolation(f"entry {j} = {v} is too far from certified limit {lim}")
    if isinstance(alpha.certificate, Eventually) and j >= alpha.certificate.n0 and v != lim:
        raise CertificateViolation(f"entry {j} = {v} contradicts Eventually({lim})")


def zero_test_real(alpha: Stream, fuel: int):
    """Three-valued test of lim alpha == 0.

    Nonzero(j) means |alpha(j)| >= 2^-(j-1) was verified exactly, which forces
    a nonzero limit.  Zero is only returned on a certificate whose limit is 0.
    """
    lim = alpha.limit
    if lim == 0:
        return Zero(alpha.certificate)
    meter = Meter(fuel)
    try:
        for j in range(fuel + 1):
            v = rat(alpha.entry(j, meter))
            _check_limit(alpha, j, v)
            if abs(v) >= pow2(1 - j):
                return Nonzero(j)
    except OutOfFuel:
        pass
    except Divergence as exc:
        return DivergentCertified(str(exc))
    return Unknown()


def zero_test_baire(x: Stream, fuel: int):
    """Three-valued test of x == (0, 0, ...).

    Zero needs an Eventually(0, n0) certificate plus an exact check of the
    entries below n0.
    """
    cert = x.certificate
    bound = cert.n0 if isinstance(cert, Eventually) and cert.q == 0 else None
    meter = Meter(fuel)
    try:
        for j in range(fuel + 1):
            if bound is not None and j >= bound:
                return Zero(cert)
            if x.entry(j, meter) != 0:
                return Nonzero(j)
    except OutOfFuel:
        pass
    except Divergence as exc:
        return DivergentCertified(str(exc))
    return Unknown()


def approx_equiv(alpha: Stream, beta: Stream, n: int, fuel: int):
    """One clause of the equivalence: some m in (n, n + fuel] has |a_m - b_m| < 2^-n."""
    meter = Meter(10 ** 12 if fuel > 10 ** 9 else fuel * 64 + 64)
    bound = pow2(-n)
    try:
        for m in range(n + 1, n + fuel + 1):
            if abs(rat(alpha.entry(m, meter)) - rat(beta.entry(m, meter))) < bound:
                return Value(True)
    except OutOfFuel:
        pass
    except Divergence as exc:
        return DivergentCertified(str(exc))
    la, lb = alpha.limit, beta.limit
    if la is not None and lb is not None and la != lb:
        return Value(False)
    return Unknown()


# ------------------------------------------------------------- # utilities


def make_hash_extension(x: Stream, padding: Stream) -> Stream:
    """(#^p0, x(0), #^p1, x(1), ...) for padding = (p0, p1, ...)."""

    def fn(k, meter):
        pos = 0
        i = 0
        while True:
            p = padding.entry(i, meter)
            if k < pos + p:
                return HASH
            if k == pos + p:
                return x.entry(i, meter)
            pos += p + 1
            i += 1

    return Stream(fn, "hash", None, 1, f"#ext({x.name})", value_certificate=x.certificate)


def nonhash_prefix(seq: Sequence) -> list:
    return [v for v in seq if v is not HASH]


# ------------------------------------------------------------- file format


def _parse_entry(token: str, kind: str):
    if token == "#":
        if kind != "baire":
            raise StreamFormatError("# entries are only allowed in baire streams")
        return HASH
    q = parse_rational(token)
    if kind == "baire":
        if q.denominator != 1 or q < 0:
            raise StreamFormatError(f"baire entries must be naturals, got {token}")
        return int(q)
    return q


def load_stream(text: str, name: str = "") -> Stream:
    """Parse the line-oriented stream literal format.

    ::

        real | baire
        cert limit <q>            (optional)
        cert eventually <q> <n0>  (optional; q may be # for baire)
        tail const <q>            (optional, uncertified tail)
        tail geometric <a> <r>    (optional, uncertified tail a*r^i)
        <i> <value>               (one entry per line)
    """
    lines = []
    for raw in text.splitlines():
        line = raw.split(";", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines or lines[0] not in ("real", "baire"):
        raise StreamFormatError("stream file must start with 'real' or 'baire'")
    kind = lines[0]
    cert = None
    tail = None
    entries: dict[int, Any] = {}
    for line in lines[1:]:
        parts = line.split()
        if parts[0] == "cert":
            if len(parts) == 3 and parts[1] == "limit":
                if kind != "real":
                    raise StreamFormatError("limit certificates apply to real streams")
                cert = Limit(parse_rational(parts[2]))
            elif len(parts) == 4 and parts[1] == "eventually":
                cert = Eventually(_parse_entry(parts[2], kind), int(parts[3]))
            else:
                raise StreamFormatError(f"bad certificate line {line!r}")
        elif parts[0] == "tail":
            if len(parts) == 3 and parts[1] == "const":
                c = _parse_entry(parts[2], kind)
                tail = lambda i, c=c: c
            elif len(parts) == 4 and parts[1] == "geometric":
                a, r = parse_rational(parts[2]), parse_rational(parts[3])
                if kind == "real":
                    tail = lambda i, a=a, r=r: a * r ** i
                else:
                    tail = lambda i, a=a, r=r: _parse_entry(format_rational(a * r ** i), kind)
            else:
                raise StreamFormatError(f"bad tail line {line!r}")
        else:
            if len(parts) != 2:
                raise StreamFormatError(f"bad entry line {line!r}")
            idx = int(parts[0])
            if idx in entries:
                raise StreamFormatError(f"duplicate entry {idx}")
            entries[idx] = _parse_entry(parts[1], kind)
    top = max(entries) + 1 if entries else 0
    if cert is None and tail is None:
        raise StreamFormatError("unlisted entries are not derivable: add a certificate or a tail")
    needed = top
    if isinstance(cert, Eventually) and tail is None:
        needed = max(top, cert.n0)
    for i in range(needed):
        if i not in entries:
            raise StreamFormatError(f"entry {i} is missing and not derivable")
    for i, v in entries.items():
        if isinstance(cert, Eventually) and i >= cert.n0 and v != cert.q:
            raise StreamFormatError(f"entry {i} contradicts the certificate")

    def fn(i, meter, entries=entries, cert=cert, tail=tail):
        if i in entries:
            return entries[i]
        if isinstance(cert, Eventually) and i >= cert.n0:
            return cert.q
        if isinstance(cert, Limit):
            return cert.q
        return tail(i)

    if kind == "baire" and (any(v is HASH for v in entries.values())
                            or (isinstance(cert, Eventually) and cert.q is HASH)):
        kind_out = "hash"
        if isinstance(cert, Eventually) and cert.q is HASH:
            cert = ZeroOrHash(cert.n0)
    else:
        kind_out = kind
    s = Stream(fn, kind_out, cert, 1, name or "file")
    if kind == "real":
        check = s.cached(top + 8)
        if not is_cauchy_prefix(check):
            raise StreamFormatError("real stream entries are not fast Cauchy")
        if isinstance(cert, Limit):
            for j, v in enumerate(check):
                if abs(v - cert.q) > pow2(-j - 1):
                    raise StreamFormatError(f"entry {j} is too far from the certified limit")
    return s


def dump_stream(stream: Stream, n: int) -> str:
    kind = "real" if stream.kind == "real" else "baire"
    out = [kind]
    cert = stream.certificate
    if isinstance(cert, Limit):
        out.append(f"cert limit {format_rational(cert.q)}")
    elif isinstance(cert, Eventually):
        out.append(f"cert eventually {cert.q if cert.q is HASH else format_rational(cert.q)} {cert.n0}")
    elif isinstance(cert, ZeroOrHash):
        out.append(f"cert eventually # {cert.n0}")
    for i, v in enumerate(stream.cached(n)):
        out.append(f"{i} {v if v is HASH else format_rational(v)}")
    return "\n".join(out) + "\n"
