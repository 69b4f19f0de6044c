"""Low-rank splitting solvers for differential Lyapunov and Riccati equations.

Factored solutions ``P = L D L^T`` are propagated with Lie and Strang
splittings whose linear parts use Leja interpolation of the matrix
exponential action. See :class:`SplittingSolver` for the estimator-style
interface and :mod:`dmesolve.schemes` for the functional one.
"""
__version__ = "0.1.0"

from .exceptions import (ConfigurationError, DivergenceError, DMEError, IngestionError, InputError,
                         SingularityError, SizeError, StiffnessError)
from .lowrank import LowRankFactor, compress, concat, from_dense, to_dense
from .expleja import (MassMatrixOperator, SparseOperator, SpectrumBounds, exp_action,
                      gershgorin_bounds, leja_params, pencil_bounds)
from .flows import BilinearTerm, RiccatiGain
from .problems import (ProblemSpec, advection_model, fem1d_model, heat2d_model,
                       load_mass_matrix_problem, stochastic_heat_model)
from .schemes import SchemeSpec, SolveReport, convergence_study, integrate, relative_error
from .estimator import SplittingSolver

__all__ = [
    "BilinearTerm", "ConfigurationError", "DMEError", "DivergenceError", "IngestionError",
    "InputError", "LowRankFactor", "MassMatrixOperator", "ProblemSpec", "RiccatiGain",
    "SchemeSpec", "SingularityError", "SizeError", "SolveReport", "SparseOperator",
    "SpectrumBounds", "SplittingSolver", "StiffnessError", "advection_model", "compress",
    "concat", "convergence_study", "exp_action", "fem1d_model", "from_dense",
    "gershgorin_bounds", "heat2d_model", "integrate", "leja_params", "load_mass_matrix_problem",
    "pencil_bounds", "relative_error", "stochastic_heat_model", "to_dense",
]
