"""Estimator-style front end to :func:`dmesolve.schemes.integrate`."""
from __future__ import annotations

from sklearn.base import BaseEstimator, clone

from .schemes import SchemeSpec, integrate, relative_error
from .validation import check_is_fitted, check_problem


class SplittingSolver(BaseEstimator):
    """Low-rank splitting solver for differential Lyapunov and Riccati equations.

    Parameters
    ----------
    composition : str
        One of ``F12``, ``F1F2``, ``F12F3``, ``F1F2F3``, ``F1F3F2``,
        ``F12F4``, ``F1F2F4``, ``F1F4F2``, ``F12F3F4``.
    kind : {"strang", "lie"}
    n_steps : int
        Number of time steps over ``[0, T]``.
    compression_tol, leja_tol : float
        Relative truncation tolerance of the column compression and stopping
        tolerance of the Leja interpolation.
    quad_nodes : int
        Gauss-Legendre nodes of the integral factor used by ``F12``.

    Attributes
    ----------
    solution_ : LowRankFactor
        Factored approximation of ``P(T)``.
    report_ : SolveReport
    rank_history_ : list of int

    Examples
    --------
    >>> from dmesolve.problems import heat2d_model
    >>> solver = SplittingSolver("F12", n_steps=10).fit(heat2d_model(4, gain=False))
    >>> len(solver.rank_history_)
    10
    """

    def __init__(self, composition="F1F2", kind="strang", n_steps=100, compression_tol=1e-16,
                 leja_tol=1e-16, quad_nodes=14):
        self.composition = composition
        self.kind = kind
        self.n_steps = n_steps
        self.compression_tol = compression_tol
        self.leja_tol = leja_tol
        self.quad_nodes = quad_nodes

    def to_spec(self):
        return SchemeSpec(**self.get_params())

    def fit(self, problem, y=None):
        check_problem(problem)
        self.report_ = integrate(self.to_spec(), problem)
        self.solution_ = self.report_.final
        self.rank_history_ = list(self.report_.rank_history)
        self.n_exp_actions_ = self.report_.exp_action_count
        return self

    def error(self, reference):
        """Relative Frobenius error of :attr:`solution_` against ``reference``."""
        check_is_fitted(self)
        return relative_error(self.solution_, reference)

    def with_steps(self, n_steps):
        """Unfitted copy with ``n_steps`` replaced."""
        return clone(self).set_params(n_steps=n_steps)
