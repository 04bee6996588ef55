import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from causalcheck.scm import exact_joint, figure, random_binary_scm

DATA = Path(__file__).parent / "data"


def run(*args, cwd=None):
    exe = shutil.which("causalcheck")
    cmd = [exe] if exe else [sys.executable, "-m", "causalcheck.cli"]
    return subprocess.run([*cmd, *map(str, args)], capture_output=True, text=True, cwd=cwd, timeout=300)


def golden(name):
    return (DATA / name).read_text()


def test_dsep_connected_prints_witness():
    p = run("dsep", DATA / "fig2a.dag", "--x", "U1", "--y", "U2", "--given", "C2")
    assert p.returncode == 1
    assert p.stdout == "connected\nU1 -> C2 <- U2\n"


def test_dsep_separated():
    p = run("dsep", DATA / "fig2a.dag", "--x", "U1", "--y", "U2")
    assert p.returncode == 0 and p.stdout == "separated\n"


def test_dsep_overlap_is_input_error():
    p = run("dsep", DATA / "fig2a.dag", "--x", "A", "--y", "A")
    assert p.returncode == 2 and p.stderr.startswith("error:")


def test_identify_explain_golden():
    p = run("identify", DATA / "fig2b.dag", "--treatment", "A", "--outcome", "Y", "--explain")
    assert p.returncode == 0
    assert p.stdout == golden("identify_2b_explain.txt")


def test_identify_latex_golden():
    p = run("identify", DATA / "fig3b.dag", "--treatment", "A", "--outcome", "Y", "--format", "latex")
    assert p.returncode == 0
    assert p.stdout == golden("identify_3b_latex.txt")


def test_identify_backdoor_text():
    p = run("identify", DATA / "fig3a.dag", "--treatment", "A", "--outcome", "Y")
    assert p.stdout == golden("identify_3a.txt") == "Σ_{c} P(c) P(y|a,c)\n"


def test_identify_bow_not_identifiable():
    p = run("identify", DATA / "bow.dag", "--treatment", "A", "--outcome", "Y")
    assert p.returncode == 3
    assert p.stdout == "NOT IDENTIFIABLE: hedge: F={A, Y}, F'={Y}\n"


def test_malformed_graph_reports_position():
    p = run("identify", DATA / "bad.dag", "--treatment", "A", "--outcome", "Y")
    assert p.returncode == 2
    assert "line 2, col 5" in p.stderr and p.stdout == ""


def test_missing_file():
    p = run("dsep", DATA / "nope.dag", "--x", "A", "--y", "Y")
    assert p.returncode == 2 and "cannot read" in p.stderr


def test_strict_flag():
    p = run("dsep", DATA / "fig3a.dag", "--x", "A", "--y", "Y", "--strict")
    assert p.returncode == 2 and "UnknownNode" in p.stderr


def test_identify_rejects_undirected(tmp_path):
    f = tmp_path / "u.dag"
    f.write_text("C1 -- C2; C1 -> A; A -> Y")
    p = run("identify", f, "--treatment", "A", "--outcome", "Y")
    assert p.returncode == 2


def test_identify_evaluates_table_against_oracle(tmp_path):
    s = random_binary_scm(figure("3a"), 4)
    table = tmp_path / "joint.csv"
    exact_joint(s).to_csv(table)
    truth = exact_joint(s.intervene({"A": 1}), ["Y"]).prob({"Y": 1})
    p = run("identify", DATA / "fig3a.dag", "--treatment", "A", "--outcome", "Y",
            "--table", table, "--at", "Y=1,A=1")
    assert p.returncode == 0
    value = float(p.stdout.splitlines()[-1].removeprefix("value: "))
    assert abs(value - truth) < 1e-10


def test_identify_trapdoor_context(tmp_path):
    s = random_binary_scm(figure("2b"), 1)
    table = tmp_path / "joint.csv"
    exact_joint(s).to_csv(table)
    truth = exact_joint(s.intervene({"A": 0}), ["Y"]).prob({"Y": 1})
    for c2 in (0, 1):
        p = run("identify", DATA / "fig2b.dag", "--treatment", "A", "--outcome", "Y",
                "--table", table, "--at", "Y=1,A=0", "--context", f"C2={c2}")
        lines = p.stdout.splitlines()
        assert "context: C2" in lines
        assert abs(float(lines[-1].removeprefix("value: ")) - truth) < 1e-10


def test_adjust_check_and_enumerate():
    p = run("adjust", DATA / "fig2a.dag", "--treatment", "A", "--outcome", "Y", "--set", "C2")
    assert p.returncode == 1
    assert p.stdout == "invalid: open back-door path\nA <-> C2 <-> Y\n"
    p = run("adjust", DATA / "fig2a.dag", "--treatment", "A", "--outcome", "Y")
    assert p.returncode == 0 and p.stdout == "valid\n"
    p = run("adjust", DATA / "fig2a.dag", "--treatment", "A", "--outcome", "Y", "--enumerate")
    assert p.stdout == "{}\n"
    p = run("adjust", DATA / "fig3a.dag", "--treatment", "A", "--outcome", "Y", "--enumerate")
    assert p.stdout == "{C}\n"


def test_simulate_golden_and_seed_on_stderr():
    p = run("simulate", "--example", "4", "--n", "8", "--seed", "7", "--include-po")
    assert p.returncode == 0
    assert p.stdout == golden("simulate_ex4_n8_seed7.csv")
    assert p.stderr.strip() == "seed: 7"


def test_simulate_consistency_in_csv():
    rows = list(csv.DictReader(golden("simulate_ex4_n8_seed7.csv").splitlines()))
    for r in rows:
        assert r["Y"] == (r["Y1"] if r["A"] == "1" else r["Y0"])


def test_simulate_example1_files(tmp_path):
    out = tmp_path / "ex1.csv"
    p = run("simulate", "--example", "1", "--n", "1000", "--seed", "7", "--out", out)
    assert p.returncode == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "C1,C2,C3,C4,A,Y" and len(lines) == 1001
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["seed"] == 7 and meta["n"] == 1000 and meta["example"] == 1
    assert meta["true_ate"] == -2.0
    again = tmp_path / "again.csv"
    run("simulate", "--example", "1", "--n", "1000", "--seed", "7", "--out", again, "--include-po")
    assert again.read_text().splitlines()[0] == "C1,C2,C3,C4,A,Y,Y0,Y1"
    first = [l.split(",")[:6] for l in lines]
    second = [l.split(",")[:6] for l in again.read_text().splitlines()]
    assert first == second


def test_simulate_rejects_bad_parameters():
    assert run("simulate", "--example", "1", "--n", "0").returncode == 2
    assert run("simulate", "--example", "1", "--n", "5", "--rho", "1.2").returncode == 2


def test_version():
    p = run("--version")
    assert p.returncode == 0 and p.stdout.startswith("causalcheck ")
