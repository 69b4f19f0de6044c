"""Command line entry point ``dmesolve``.

::

    dmesolve solve|converge|bench|verify --config run.yaml [--threads N] [--seed S]
                                         [--out DIR] [--parallel-studies]

Every command writes a ``manifest.txt`` next to its CSV tables. CSV files
start with a ``# manifest`` comment line carrying the config hash and the
version, followed by a header row. Timings are kept in separate files so
that the remaining outputs are byte-identical across repeated runs.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import os
import subprocess
import sys

from . import __version__, backend
from .acceptance import Settings, all_passed, run_all
from .bench import BenchRecord, instrumented_solve, micro_benchmark
from .config import load_config, parse_config
from .exceptions import ConfigurationError, DMEError, SizeError
from .oracle import integrate_dense
from .schemes import convergence_study, integrate, steps_for
from .storage import write_factor

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def version_string():
    """Package version, with the git commit appended when run from a checkout."""
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--abbrev=12"], cwd=here,
                             capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return __version__
    rev = out.stdout.strip()
    return f"{__version__}+g{rev}" if out.returncode == 0 and rev else __version__


class Run:
    """Output directory, manifest entries and CSV writing for one command."""

    def __init__(self, command, config, threads):
        self.command = command
        self.config = config
        self.threads = threads
        self.outdir = config.output.directory
        os.makedirs(self.outdir, exist_ok=True)
        self.hash = config.digest()
        self.version = version_string()
        self.entries = [("command", command), ("config_hash", self.hash),
                        ("version", self.version), ("threads", threads)]

    def note(self, key, value):
        self.entries.append((key, value))

    def path(self, name):
        return os.path.join(self.outdir, name)

    def write_csv(self, name, header, rows):
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# manifest config_hash={self.hash} version={self.version}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        self.note("table", name)

    def finish(self):
        with open(self.path("manifest.txt"), "w", encoding="utf-8") as fh:
            for k, v in self.entries:
                fh.write(f"{k} = {v}\n")


def _fmt(x):
    return repr(float(x))


def _scheme_entries(run, spec):
    for k in ("composition", "kind", "n_steps", "compression_tol", "leja_tol", "quad_nodes"):
        run.note(k, getattr(spec, k))


def _problem_entries(run, problem):
    # the generator's recipe includes defaulted arguments such as the seed
    params = problem.recipe
    run.note("problem", " ".join(f"{k}={v}" for k, v in params.items()))
    run.note("seed", params.get("seed", "n/a"))


def cmd_solve(config, threads, parallel=False):
    problem = config.build_problem()
    spec = config.scheme.spec()
    run = Run("solve", config, threads)
    _problem_entries(run, problem)
    _scheme_entries(run, spec)
    report = integrate(spec, problem)
    stored = write_factor(run.path("factor.bin"), report.final)
    with open(run.path("factor.bin"), "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    h = problem.T / spec.n_steps
    run.write_csv("steps.csv", ["step", "t", "rank"],
                  [[k + 1, _fmt((k + 1) * h), r] for k, r in enumerate(report.rank_history)])
    run.note("exp_action_count", report.exp_action_count)
    run.note("final_rank", stored.rank)
    run.note("factor_file", "factor.bin")
    run.note("factor_layout", "dmesolve factor container v1")
    run.note("factor_sha256", digest)
    total = report.wall_time
    rows = [["total", _fmt(total), 1, 1.0]]
    for name in sorted(report.per_kernel_time):
        s = report.per_kernel_time[name]
        rows.append([name, _fmt(s), report.kernel_calls.get(name, 0), _fmt(s / total if total else 0.0)])
    _write_timings(run, ["section", "seconds", "calls", "fraction_of_total"], rows)
    run.finish()
    return EXIT_OK


def _write_timings(run, header, rows):
    with open(run.path("timings.csv"), "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# manifest config_hash={run.hash} version={run.version}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _reference(config, problem, schemes):
    if config.study.reference == "self-16x":
        return "self-16x"
    try:
        return integrate_dense(problem).P
    except SizeError as err:
        raise ConfigurationError(f"{err}; set study.reference: self-16x") from None


def cmd_converge(config, threads, parallel=False):
    problem = config.build_problem()
    if config.study.h_grid is None:
        raise ConfigurationError("study.h_grid is required for converge")
    h_list = config.study.h_grid
    for h in h_list:
        steps_for(problem.T, h)
    schemes = config.schemes()
    run = Run("converge", config, threads)
    _problem_entries(run, problem)
    run.note("reference", config.study.reference)
    run.note("h_grid", " ".join(_fmt(h) for h in h_list))
    reference = _reference(config, problem, schemes)
    rows, fits = [], []
    executor = concurrent.futures.ThreadPoolExecutor(max_workers=len(h_list)) if parallel else None
    try:
        for spec in schemes:
            res = convergence_study(spec, problem, h_list, reference, executor=executor)
            name = f"{spec.kind}:{spec.composition}"
            for h, e in zip(res.h, res.errors):
                rows.append([name, _fmt(h), steps_for(problem.T, h), _fmt(e), ""])
            fits.append([name, "", "", "", _fmt(res.slope)])
            run.note(f"slope[{name}]", f"{res.slope:.6f}")
    finally:
        if executor is not None:
            executor.shutdown()
    run.write_csv("convergence.csv", ["scheme", "h", "n_steps", "rel_error", "slope"], rows + fits)
    run.finish()
    return EXIT_OK


def cmd_bench(config, threads, parallel=False):
    study = config.study
    run = Run("bench", config, threads)
    run.note("repetitions", study.repetitions)
    run.note("warmup", study.warmup)
    backend.warmup()
    # thread counts beyond the host limit collapse onto the limit
    effective = sorted({min(nt, backend.max_threads()) for nt in study.threads})
    run.note("threads_requested", " ".join(str(t) for t in study.threads))
    run.note("threads_effective", " ".join(str(t) for t in effective))
    records = []
    for eff in effective:
        for n, rank in study.sizes:
            records += micro_benchmark(n, rank, eff, study.repetitions, study.warmup)
    if study.instrumented_solve and config.problem is not None:
        problem = config.build_problem()
        _problem_entries(run, problem)
        _scheme_entries(run, config.scheme.spec())
        for eff in effective:
            rows, _ = instrumented_solve(config.scheme.spec(), problem, eff)
            records += rows
    run.note("physical_cores", backend.physical_cores())
    run.note("max_threads", backend.max_threads())
    run.write_csv("bench.csv", BenchRecord.header(),
                  [[r.mode, r.kernel, r.n, r.rank, r.threads, _fmt(r.seconds), _fmt(r.fraction_of_total)]
                   for r in records])
    run.finish()
    return EXIT_OK


def cmd_verify(config, threads, parallel=False):
    v = config.verify
    settings = Settings(v.compression_tol, v.leja_tol, v.quad_nodes)
    run = Run("verify", config, threads)
    run.note("compression_tol", v.compression_tol)
    run.note("leja_tol", v.leja_tol)
    run.note("quad_nodes", v.quad_nodes)
    results = run_all(settings, v.only)
    run.write_csv("acceptance.csv", ["criterion", "status", "measured", "required", "seconds"],
                  [[r.key, r.status, r.measured, r.required, f"{r.seconds:.2f}"] for r in results])
    ok = all_passed(results)
    run.note("overall", "PASS" if ok else "FAIL")
    run.finish()
    print(f"overall: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAILED


COMMANDS = {"solve": cmd_solve, "converge": cmd_converge, "bench": cmd_bench, "verify": cmd_verify}


def build_parser():
    p = argparse.ArgumentParser(prog="dmesolve",
                                description="Low-rank splitting solvers for differential matrix equations.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="YAML run configuration (optional for verify)")
    p.add_argument("--threads", type=int, default=1, help="kernel and BLAS threads (default 1)")
    p.add_argument("--seed", type=int, help="override the generator seed")
    p.add_argument("--out", help="override output.directory")
    p.add_argument("--parallel-studies", action="store_true",
                   help="run the points of a convergence study concurrently")
    p.add_argument("--version", action="version", version=f"dmesolve {__version__}")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        if args.config is None:
            if args.command != "verify":
                raise ConfigurationError(f"{args.command} needs --config")
            config = parse_config({})
        else:
            config = load_config(args.config)
        config = config.with_overrides(seed=args.seed, out=args.out)
        with backend.threads(args.threads) as nt:
            return COMMANDS[args.command](config, nt, args.parallel_studies)
    except ConfigurationError as err:
        print(f"dmesolve: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DMEError as err:
        print(f"dmesolve: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
