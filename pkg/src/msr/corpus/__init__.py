"""Bundled example programs, schemes, streams and set codes.

``corpus.json`` holds the program corpus (master programs, some compiled
from schemes), the scheme corpus, replay entries with their expected first
output line and trace counts, and a corpus of real functionals.
"""

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

from ..cauchy import baire_stream, load_stream, real_rep, Eventually
from ..msvm import parse_program
from ..schemes import compile_scheme, parse_scheme, typecheck
from ..tte import STORE, interleave, parse_functional

ROOT = Path(__file__).resolve().parent


@dataclass
class CorpusEntry:
    name: str
    target: str               # program or scheme name
    kind: str                 # "program" or "scheme"
    naturals: list = field(default_factory=list)
    inputs: list = field(default_factory=list)    # paths relative to the corpus root
    expect: str = ""
    counts: dict = None


@lru_cache(maxsize=None)
def manifest() -> dict:
    return json.loads((ROOT / "corpus.json").read_text())


def path(rel: str) -> Path:
    return ROOT / rel


def read(rel: str) -> str:
    return path(rel).read_text()


def functionals(probes_only: bool = False) -> list:
    """Handles of the real functional corpus (the un-fine-tuned machines)."""
    return [_menu_handle(f["code"]) for f in manifest()["functionals"]
            if f.get("probe") or not probes_only]


def program_specs() -> list:
    return list(manifest()["programs"])


def scheme_specs() -> list:
    return list(manifest()["schemes"])


def entries() -> list:
    out = []
    for e in manifest()["entries"]:
        kind = "program" if "program" in e else "scheme"
        out.append(CorpusEntry(e["name"], e[kind], kind, list(e.get("naturals", [])),
                               list(e.get("inputs", [])), e["expect"], e.get("counts")))
    return out


def _spec(specs, name):
    for s in specs:
        if s["name"] == name:
            return s
    raise KeyError(name)


@lru_cache(maxsize=None)
def program_text(name: str) -> str:
    spec = _spec(program_specs(), name)
    if "file" in spec:
        return read(spec["file"])
    return compile_scheme(parse_scheme(read(spec["scheme"])), name)


def program(name: str):
    return parse_program(program_text(name))


def scheme(name: str):
    return parse_scheme(read(_spec(scheme_specs(), name)["file"]))


def stream(rel: str):
    return load_stream(read(rel), rel)


def oracle_of(inputs: list):
    """One stream, or the interleaving of several, or None."""
    streams = [stream(p) for p in inputs]
    if not streams:
        return None
    return streams[0] if len(streams) == 1 else interleave(*streams)


# ------------------------------------------------------------- random inputs

def random_baire(rng: random.Random, heads=(5, 7)):
    """A finitely supported point, certified to be eventually zero."""
    n = rng.randint(0, 4)
    vals = [rng.randint(0, 9) for _ in range(n)]
    if vals and rng.random() < 0.5:
        vals[0] = rng.choice(heads)
    return baire_stream(lambda i, v=tuple(vals): v[i] if i < len(v) else 0,
                        Eventually(0, len(vals)))


def random_real(rng: random.Random):
    q = Fraction(rng.randint(-24, 40), rng.choice([4, 8, 10, 16]))
    return real_rep(q, seed=rng.randrange(1 << 16))


@lru_cache(maxsize=None)
def _menu_handle(text: str) -> int:
    return STORE.intern(parse_functional(text))


def _intern_menus():
    # index menus get the smallest handles: compiled masters count in unary
    for spec in manifest()["programs"] + manifest()["schemes"]:
        for text in spec.get("indices", ()):
            _menu_handle(text)
    for f in manifest()["functionals"]:
        _menu_handle(f["code"])


def _naturals(spec: dict, count: int, rng: random.Random) -> list:
    """Small naturals; with an ``indices`` menu the first one names a functional."""
    bound = spec.get("bound", 9)
    nats = [rng.randint(0, bound) for _ in range(count)]
    if nats and "indices" in spec:
        nats[0] = _menu_handle(rng.choice(spec["indices"]))
    return nats


def random_input(spec: dict, rng: random.Random):
    """(naturals, oracle) drawn to fit a program-corpus entry."""
    nats = _naturals(spec, spec.get("naturals", 0), rng)
    kind = spec.get("oracle", "none")
    if kind == "baire":
        x = random_baire(rng)
    elif kind == "real":
        x = random_real(rng)
    elif kind == "baire2":
        a = random_baire(rng)
        x = interleave(a, a if rng.random() < 0.5 else random_baire(rng))
    else:
        x = None
    return nats, x


def random_arguments(spec: dict, rng: random.Random):
    """(naturals, points) for a scheme-corpus entry, shaped by its signature."""
    ast = scheme(spec["name"])
    sig = typecheck(ast)
    nats = _naturals(spec, sig.p, rng)
    real = "(universal real" in read(spec["file"]) or "(chi real" in read(spec["file"])
    pts = [random_real(rng) if real else random_baire(rng) for _ in range(sig.q)]
    if sig.q == 2 and rng.random() < 0.5:
        pts[1] = pts[0]
    return nats, pts


_intern_menus()
