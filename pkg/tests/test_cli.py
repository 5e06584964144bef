import subprocess
import sys

import pytest

from msr import corpus
from msr.cli import main


def p(rel):
    return str(corpus.path(rel))


def msr(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_member_example(capsys):
    code, out, _ = msr(capsys, "member", "--set", p("data/unit-interval.set"),
                       "--real", p("data/const-half.stream"))
    assert (code, out) == (0, "member\n")


def test_run_example(capsys):
    code, out, _ = msr(capsys, "run", p("programs/openset.msr"), "--input", p("data/x75.stream"),
                       "--fuel", "10000")
    assert code == 0
    assert out.splitlines() == ["halt 1", "master=2 slave=1 ztest=1"]


def test_zero_test_example(capsys):
    code, out, _ = msr(capsys, "zero-test", p("data/small.stream"))
    assert code == 2 and out.split()[0] == "unknown"


def test_usage_errors(capsys):
    code, _, err = msr(capsys, "frobnicate")
    assert code == 1 and "usage" in err
    code, _, err = msr(capsys)
    assert code == 1 and "usage" in err
    code, _, err = msr(capsys, "member", "--set", p("data/unit-interval.set"))
    assert code == 1


@pytest.mark.parametrize("argv,needle", [
    (["run", "/nonexistent.msr"], "No such file"),
    (["run", "data/x75.stream"], "error"),
    (["member", "--set", "data/unit-interval.set", "--baire", "data/x75.stream"], "real"),
    (["eval", "schemes/add.scm", "--nat", "1"], "arguments"),
    (["corpus", "no-such-entry"], "unknown corpus entries"),
])
def test_input_errors(capsys, argv, needle):
    argv = [p(a) if a.startswith(("data/", "schemes/", "programs/")) else a for a in argv]
    code, _, err = msr(capsys, *argv)
    assert code == 1 and err.startswith("msr: error:") and needle in err


def test_unknown_and_partial_exit_two(capsys):
    code, out, _ = msr(capsys, "member", "--set", p("data/head-even.set"), "--baire", p("data/x75.stream"))
    assert code == 2 and out.startswith("unknown")


def test_eval_precision(capsys):
    code, out, _ = msr(capsys, "eval", p("schemes/scale-real.scm"), "--input", p("data/two.stream"),
                       "--precision", "3")
    assert code == 0
    from fractions import Fraction
    v = Fraction(out.split()[1])
    assert abs(v - 7) <= Fraction(1, 8)


def test_eval_naturals(capsys):
    assert msr(capsys, "eval", p("schemes/add.scm"), "--nat", "2", "--nat", "3")[:2] == (0, "value 5\n")


def test_run_through_normal_form(capsys):
    code, out, _ = msr(capsys, "run", p("programs/openset.msr"), "--input", p("data/x75.stream"),
                       "--nf", "--check")
    assert code == 0 and out.splitlines() == ["halt 1", "master=2 slave=1 ztest=1", "witness ok"]


SNAPSHOTS = {
    ("run", "programs/openset.msr", "--input", "data/x75.stream"):
        "status=halt\noutput=1\nmaster=2\nslave=1\nztest=1\n",
    ("run", "programs/doubler.msr", "--input", "data/x75.stream", "--precision", "3"):
        "status=halt\npoint=0,2,4,6\nmaster=1\nslave=1\nztest=0\n",
    ("eval", "schemes/scale-real.scm", "--input", "data/two.stream", "--precision", "3"):
        "status=value\nvalue=7165/1024\nprecision=3\n",
    ("zero-test", "data/small.stream"): "status=unknown\nreason=fuel exhausted\n",
    ("tree", "data/const-half.stream", "--depth", "2"):
        "level=0 label=0 status=live\nlevel=1 label=0 status=live\nlevel=1 label=1/2 status=live\n"
        "level=2 label=1/4 status=live\nlevel=2 label=1/2 status=live\n",
    ("decompose", "programs/openset.msr"):
        "piece=5 opens=1 closeds=0 output=(const 1)\npiece=6 opens=0 closeds=1 output=(const 0)\n"
        "disjoint=true\n",
    ("assemble", "programs/openset.msr"):
        "name=open-set decider\nstart=qs\nhalt=qh\ncodomain=nat\nquadruples=5\nfunctionals=1\n"
        "index_bits=1073\n",
}


@pytest.mark.parametrize("argv", list(SNAPSHOTS), ids=lambda a: "-".join(a[:2]))
def test_machine_format_snapshots(capsys, argv):
    full = [p(a) if "/" in a else a for a in argv] + ["--format", "machine"]
    _, out, _ = msr(capsys, *full)
    assert out == SNAPSHOTS[argv]
    assert all("=" in line for line in out.splitlines())


def test_gamma_machine_format_is_stable(capsys):
    a = msr(capsys, "gamma", p("programs/two-sets.msr"), "--format", "machine")[1]
    b = msr(capsys, "gamma", p("programs/two-sets.msr"), "--format", "machine")[1]
    assert a == b and a.count("kind=terminal") == 3


@pytest.mark.parametrize("entry", [e.name for e in corpus.entries()])
def test_corpus_entry_replays(capsys, entry):
    code, out, _ = msr(capsys, "corpus", entry)
    assert code == 0, out


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "msr.cli", "zero-test", p("data/zeros.stream")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("zero")
