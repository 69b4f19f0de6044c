import csv
import doctest
import subprocess
import sys

import numpy as np
import pytest
import yaml

import dmesolve.backend
import dmesolve.estimator
from dmesolve import cli
from dmesolve.lowrank import to_dense
from dmesolve.oracle import integrate_dense
from dmesolve.problems import heat2d_model
from dmesolve.schemes import relative_error
from dmesolve.storage import read_factor

HEAT = {"generator": "heat2d", "nx": 5, "gain": False}


def config(tmp_path, name="run.yaml", **sections):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(sections))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        first = fh.readline()
        return first, list(csv.reader(fh))


def manifest(path):
    out = {}
    for line in open(path):
        k, _, v = line.rstrip("\n").partition(" = ")
        out.setdefault(k, v)
    return out


def test_solve_writes_factor_and_manifest(tmp_path):
    cfg = config(tmp_path, problem=HEAT, scheme={"composition": "F12", "n_steps": 100})
    out = tmp_path / "a"
    assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 0
    m = manifest(out / "manifest.txt")
    assert m["exp_action_count"] == str(100 + 14)
    assert m["command"] == "solve" and m["threads"] == "1" and m["seed"] == "0"
    assert m["version"].startswith("0.1.0")
    first, rows = read_csv(out / "steps.csv")
    assert first.startswith(f"# manifest config_hash={m['config_hash']}")
    assert rows[0] == ["step", "t", "rank"] and len(rows) == 101
    f = read_factor(out / "factor.bin")
    ref = integrate_dense(heat2d_model(5, gain=False)).P
    assert relative_error(to_dense(f), ref) < 1e-9


def test_solve_is_byte_identical(tmp_path):
    cfg = config(tmp_path, problem=HEAT, scheme={"composition": "F1F2", "n_steps": 20})
    for d in ("a", "b"):
        assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("factor.bin", "steps.csv", "manifest.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_result(tmp_path):
    cfg = config(tmp_path, problem=HEAT, scheme={"n_steps": 4})
    cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "a")])
    cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "9"])
    assert manifest(tmp_path / "b" / "manifest.txt")["seed"] == "9"
    assert (tmp_path / "a" / "factor.bin").read_bytes() != (tmp_path / "b" / "factor.bin").read_bytes()


@pytest.mark.parametrize("argv_tail, sections, message", [
    ([], {"problem": HEAT, "scheme": {"n_steps": 0}}, "scheme.n_steps"),
    ([], {"problem": HEAT, "scheme": {"composition": "F12F3"}}, "Riccati"),
    ([], {"scheme": {"n_steps": 3}}, "problem"),
    (["--threads", "0"], {"problem": HEAT}, "threads"),
])
def test_configuration_errors_exit_2(tmp_path, capsys, argv_tail, sections, message):
    cfg = config(tmp_path, **sections)
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "o")] + argv_tail) == 2
    assert message in capsys.readouterr().err


def test_solve_requires_config(capsys):
    assert cli.main(["solve"]) == 2
    assert "needs --config" in capsys.readouterr().err


def test_ingestion_errors_exit_nonzero(tmp_path, capsys):
    missing = {"generator": "mass_matrix", "path_A": str(tmp_path / "A.mtx"),
               "path_M": str(tmp_path / "M.mtx"), "path_B": str(tmp_path / "B.mtx"),
               "path_C": str(tmp_path / "C.mtx")}
    cfg = config(tmp_path, problem=missing)
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "A.mtx" in capsys.readouterr().err


def test_converge(tmp_path):
    T = 0.5
    study = {"h_grid": [T / 16, T / 32, T / 64],
             "schemes": [{"composition": "F1F2", "kind": "lie"}, {"composition": "F1F2"}]}
    cfg = config(tmp_path, problem=HEAT, study=study)
    assert cli.main(["converge", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    assert cli.main(["converge", "--config", cfg, "--out", str(tmp_path / "p"), "--parallel-studies"]) == 0
    first, rows = read_csv(tmp_path / "s" / "convergence.csv")
    assert rows[0] == ["scheme", "h", "n_steps", "rel_error", "slope"]
    slopes = {r[0]: float(r[4]) for r in rows[1:] if r[4]}
    assert 0.8 <= slopes["lie:F1F2"] <= 1.3 and 1.5 <= slopes["strang:F1F2"] <= 2.3
    assert read_csv(tmp_path / "p" / "convergence.csv") == (first, rows)


def test_converge_needs_grid_and_small_oracle(tmp_path, capsys):
    cfg = config(tmp_path, problem=HEAT)
    assert cli.main(["converge", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    big = dict(HEAT, nx=11)
    cfg = config(tmp_path, "big.yaml", problem=big, study={"h_grid": [0.25, 0.125, 0.0625]})
    assert cli.main(["converge", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "self-16x" in capsys.readouterr().err


def test_bench(tmp_path):
    study = {"sizes": [[100, 0], [400, 3]], "threads": [1, 2], "repetitions": 5}
    cfg = config(tmp_path, problem=dict(HEAT, nx=6), scheme={"composition": "F12", "n_steps": 3},
                 study=study)
    assert cli.main(["bench", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    _, rows = read_csv(tmp_path / "b" / "bench.csv")
    assert rows[0] == ["mode", "kernel", "n", "rank", "threads", "seconds", "fraction_of_total"]
    body = rows[1:]
    micro = [r for r in body if r[0] == "micro"]
    nthreads = len({min(t, dmesolve.backend.max_threads()) for t in (1, 2)})
    assert len(micro) == 2 * nthreads * 3
    for key in {(r[2], r[4]) for r in micro}:
        frac = sum(float(r[6]) for r in micro if (r[2], r[4]) == key)
        assert frac <= 1.05
    solve = [r for r in body if r[0] == "solve"]
    assert {r[1] for r in solve} == {"spmm", "one_norm", "block_add", "newton_total", "total"}
    for nt in {r[4] for r in solve}:
        kernels = sum(float(r[6]) for r in solve if r[4] == nt and r[1] in ("spmm", "one_norm", "block_add"))
        assert kernels <= 1.05


def test_verify_subset(tmp_path, capsys):
    cfg = config(tmp_path, verify={"only": ["A10", "A6"]})
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    printed = capsys.readouterr().out
    assert "A10 PASS" in printed and "overall: PASS" in printed
    _, rows = read_csv(tmp_path / "v" / "acceptance.csv")
    assert [r[0] for r in rows[1:]] == ["A6", "A10"]


def test_verify_negative_control_exits_1(tmp_path, capsys):
    cfg = config(tmp_path, verify={"only": ["A3"], "quad_nodes": 2})
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path / "v")]) == 1
    assert "A3  FAIL" in capsys.readouterr().out


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "dmesolve.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "dmesolve 0.1.0" in res.stdout


@pytest.mark.parametrize("module", [dmesolve.estimator, dmesolve.backend])
def test_doctests(module):
    assert doctest.testmod(module).failed == 0
