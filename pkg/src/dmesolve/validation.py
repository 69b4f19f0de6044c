"""Argument checks shared by the estimator, the config layer and the CLI."""
from __future__ import annotations

import math
import numbers

from .exceptions import ConfigurationError, InputError


def check_positive_int(value, name, minimum=1):
    """Return ``value`` as ``int`` if it is an integer ``>= minimum``."""
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigurationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_tolerance(value, name, allow_zero=True):
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not math.isfinite(value):
        raise ConfigurationError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ConfigurationError(f"{name} must be {'>=' if allow_zero else '>'} 0, got {value}")
    return float(value)


def check_problem(problem):
    """Raise unless ``problem`` looks like a :class:`~dmesolve.problems.ProblemSpec`."""
    from .problems import ProblemSpec

    if not isinstance(problem, ProblemSpec):
        raise InputError(f"expected a ProblemSpec, got {type(problem).__name__}")
    return problem


def check_h_grid(h_list, T, minimum=3):
    """Validate a step-size grid: at least ``minimum`` distinct positive divisors of ``T``."""
    from .schemes import steps_for

    h = [float(x) for x in h_list]
    if len(h) < minimum:
        raise ConfigurationError(f"h-grid needs at least {minimum} entries, got {len(h)}")
    if len(set(h)) != len(h):
        raise ConfigurationError("h-grid entries must be distinct")
    for x in h:
        if not (math.isfinite(x) and x > 0):
            raise ConfigurationError(f"h-grid entry {x!r} is not positive")
        steps_for(T, x)
    return h


def check_is_fitted(estimator, attribute="solution_"):
    if not hasattr(estimator, attribute):
        raise ConfigurationError(
            f"{type(estimator).__name__} is not fitted yet; call fit(problem) first"
        )
