"""Lie and Strang splitting schemes for differential matrix equations."""
from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .exceptions import ConfigurationError, DMEError, InputError
from .expleja import exp_action, leja_params
from .flows import build_integral, flow_affine, flow_bilinear, flow_constant, flow_riccati
from .lowrank import LowRankFactor, compress, frobenius_distance, frobenius_norm, to_dense

COMPOSITIONS = ("F12", "F1F2", "F12F3", "F1F2F3", "F1F3F2", "F12F4", "F1F2F4", "F1F4F2", "F12F3F4")
KINDS = ("lie", "strang")

# subflow tokens -> names used in steppers
_FLOWS = {"F1": "linear", "F2": "constant", "F3": "riccati", "F4": "bilinear", "F12": "affine"}
_TOKEN = re.compile(r"F12|F[1-4]")


def parse_composition(name):
    """Split ``"F12F3"`` into ``["F12", "F3"]``."""
    tokens = _TOKEN.findall(name)
    if "".join(tokens) != name or name not in COMPOSITIONS:
        raise ConfigurationError(f"unknown composition {name!r}; choose from {COMPOSITIONS}")
    return tokens


@dataclass(frozen=True)
class SchemeSpec:
    """A splitting composition and its discretization parameters."""

    composition: str = "F1F2"
    kind: str = "strang"
    n_steps: int = 100
    compression_tol: float = 1e-16
    leja_tol: float = 1e-16
    quad_nodes: int = 14

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        parse_composition(self.composition)
        if isinstance(self.n_steps, bool) or int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be an integer >= 1, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        if not self.compression_tol >= 0:
            raise ConfigurationError("compression_tol must be >= 0")
        if not self.leja_tol > 0:
            raise ConfigurationError("leja_tol must be > 0")
        if int(self.quad_nodes) < 2:
            raise ConfigurationError("quad_nodes must be >= 2")

    @property
    def tokens(self):
        return parse_composition(self.composition)

    def step_size(self, T):
        h = T / self.n_steps
        if not (math.isfinite(h) and h > 0):
            raise ConfigurationError(f"step size T/N = {h!r} is not positive and finite")
        return h


@dataclass(frozen=True)
class Stepper:
    """Subflows of one step in application order, as ``(flow, fraction of h)``."""

    sequence: tuple
    bilinear_order: int = 2


def build_stepper(spec, problem):
    """Sequence of subflows for one step of ``spec`` applied to ``problem``.

    Lie applies the subflows once each over the full step in the order they
    are named. Strang applies the outer subflows over half steps
    symmetrically around the innermost one, e.g. ``F1F2F3`` becomes
    ``T1(h/2) T2(h/2) T3(h) T2(h/2) T1(h/2)``.
    """
    tokens = spec.tokens
    needs_gain = "F3" in tokens
    needs_bilinear = "F4" in tokens
    if needs_gain and problem.gain is None:
        raise ConfigurationError(f"{spec.composition} needs a Riccati term; problem is a {problem.equation}")
    if needs_bilinear and problem.bilinear is None:
        raise ConfigurationError(f"{spec.composition} needs a bilinear term; problem is a {problem.equation}")
    if problem.gain is not None and not needs_gain:
        raise ConfigurationError(f"{spec.composition} ignores the Riccati term of this {problem.equation}")
    if problem.bilinear is not None and not needs_bilinear:
        raise ConfigurationError(f"{spec.composition} ignores the bilinear term of this {problem.equation}")
    flows = [_FLOWS[t] for t in tokens]
    if len(flows) == 1:
        seq = [(flows[0], 1.0)]
    elif spec.kind == "lie":
        seq = [(f, 1.0) for f in flows]
    else:
        outer = [(f, 0.5) for f in flows[:-1]]
        seq = outer + [(flows[-1], 1.0)] + outer[::-1]
    return Stepper(tuple(seq), bilinear_order=2 if spec.kind == "strang" else 1)


@dataclass
class SolveReport:
    """Outcome of :func:`integrate`."""

    final: LowRankFactor
    rank_history: list
    wall_time: float
    exp_action_count: int
    per_kernel_time: dict = field(default_factory=dict)
    kernel_calls: dict = field(default_factory=dict)


_GROWING = {"constant", "affine", "bilinear"}


class _Propagator:
    """Caches Leja parameters and integral factors for one integration."""

    def __init__(self, spec, problem, h):
        self.spec = spec
        self.problem = problem
        self.h = h
        self.params = {}
        self.integrals = {}
        self.exp_actions = 0

    def leja(self, dt):
        key = round(dt / self.h, 12)
        if key not in self.params:
            self.params[key] = leja_params(self.problem.op.bounds, dt, tol=self.spec.leja_tol)
        return self.params[key]

    def integral(self, dt):
        key = round(dt / self.h, 12)
        if key not in self.integrals:
            with backend.timed("quadrature"):
                self.integrals[key] = build_integral(
                    self.problem.op, self.problem.Q, dt, self.spec.quad_nodes,
                    params_source=self._fresh_params, tol=self.spec.compression_tol,
                )
            self.exp_actions += self.spec.quad_nodes if self.problem.Q.rank else 0
        return self.integrals[key]

    def _fresh_params(self, s):
        return leja_params(self.problem.op.bounds, s, tol=self.spec.leja_tol)

    def linear(self, dt, P):
        if P.rank == 0:
            return P
        self.exp_actions += 1
        with backend.timed("exp_action"):
            L = exp_action(self.problem.op, dt, P.L, self.leja(dt))
        return LowRankFactor(L, P.D)

    def apply(self, name, dt, P, bilinear_order):
        tol = self.spec.compression_tol
        if name == "linear":
            return self.linear(dt, P)
        if name == "constant":
            return flow_constant(dt, P, self.problem.Q)
        if name == "riccati":
            return flow_riccati(self.problem.gain, dt, P)
        if name == "bilinear":
            return flow_bilinear(self.problem.bilinear, dt, P, bilinear_order, tol)
        if name == "affine":
            integral = self.integral(dt)
            if P.rank:
                self.exp_actions += 1
            with backend.timed("exp_action"):
                return flow_affine(self.problem.op, dt, P, integral, self.leja(dt), tol)
        raise ConfigurationError(f"unknown flow {name!r}")


def integrate(spec, problem):
    """Run ``spec.n_steps`` steps of the splitting scheme from ``problem.P0``.

    Leja parameters and quadrature factors are built once per distinct
    substep length. Factors are compressed after every flow that adds
    columns and at the end of each step.
    """
    stepper = build_stepper(spec, problem)
    h = spec.step_size(problem.T)
    prop = _Propagator(spec, problem, h)
    tol = spec.compression_tol
    P = problem.P0
    ranks = []
    t0 = time.perf_counter()
    with backend.profile() as prof:
        for k in range(spec.n_steps):
            try:
                fresh = False
                for name, frac in stepper.sequence:
                    P = prop.apply(name, frac * h, P, stepper.bilinear_order)
                    if name in _GROWING:
                        if name == "constant":
                            with backend.timed("compress"):
                                P = compress(P, tol)
                        fresh = True
                    else:
                        fresh = fresh and name == "riccati"
                if not fresh:
                    with backend.timed("compress"):
                        P = compress(P, tol)
            except DMEError as err:
                err.step = k + 1
                if err.args:
                    err.args = (f"step {k + 1}/{spec.n_steps}: {err.args[0]}",) + err.args[1:]
                raise
            ranks.append(P.rank)
    wall = time.perf_counter() - t0
    return SolveReport(
        final=P,
        rank_history=ranks,
        wall_time=wall,
        exp_action_count=prop.exp_actions,
        per_kernel_time=dict(prof.seconds),
        kernel_calls=dict(prof.calls),
    )


def relative_error(approx, reference):
    """Relative Frobenius error of ``approx`` against ``reference``.

    Either argument may be a :class:`LowRankFactor` or a dense array. Two
    factors are compared without densifying.
    """
    if isinstance(approx, LowRankFactor) and isinstance(reference, LowRankFactor):
        den = frobenius_norm(reference)
        return frobenius_distance(approx, reference) / den if den else frobenius_norm(approx)
    A = to_dense(approx) if isinstance(approx, LowRankFactor) else np.asarray(approx)
    R = to_dense(reference) if isinstance(reference, LowRankFactor) else np.asarray(reference)
    den = np.linalg.norm(R)
    diff = np.linalg.norm(A - R)
    return float(diff / den) if den else float(diff)


def fit_slope(h, err):
    """Least-squares slope of ``log err`` against ``log h``."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if len(h) < 2:
        raise InputError("need at least two points to fit a slope")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


@dataclass
class StudyResult:
    """Errors of one scheme over a step-size grid."""

    scheme: SchemeSpec
    h: list
    errors: list
    slope: float
    reports: list = field(default_factory=list, repr=False)


def steps_for(T, h):
    n = T / h
    N = int(round(n))
    if N < 1 or not math.isclose(n, N, rel_tol=1e-9):
        raise ConfigurationError(f"step size {h!r} does not divide T={T!r}")
    return N


def convergence_study(spec, problem, h_list, reference, executor=None):
    """Relative errors of ``spec`` over ``h_list`` against a reference.

    Parameters
    ----------
    spec : SchemeSpec
        Template; ``n_steps`` is replaced for every grid point.
    reference : ndarray, LowRankFactor or ``"self-16x"``
        ``"self-16x"`` uses the same scheme with 16 times the finest step
        count as reference.
    executor : concurrent.futures.Executor, optional
        Runs the grid points concurrently.
    """
    if reference is None:
        raise ConfigurationError("a reference solution is required")
    steps = [steps_for(problem.T, h) for h in h_list]
    if isinstance(reference, str):
        if reference != "self-16x":
            raise ConfigurationError(f"unknown reference {reference!r}")
        reference = integrate(replace(spec, n_steps=16 * max(steps)), problem).final

    def run(N):
        return integrate(replace(spec, n_steps=N), problem)

    reports = list(executor.map(run, steps)) if executor is not None else [run(N) for N in steps]
    errors = [relative_error(r.final, reference) for r in reports]
    hs = [problem.T / N for N in steps]
    return StudyResult(spec, hs, errors, fit_slope(hs, errors), reports)
