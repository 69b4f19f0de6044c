"""Exception hierarchy for dmesolve."""


class DMEError(Exception):
    """Base class for all errors raised by dmesolve."""


class InputError(DMEError, ValueError):
    """Input rejected: wrong shape, asymmetric where symmetry is required, etc."""


class SizeError(InputError):
    """A dense materialization guard was exceeded."""


class ConfigurationError(DMEError, ValueError):
    """Inconsistent solver or run configuration."""


class DivergenceError(DMEError, ArithmeticError):
    """Newton interpolation did not converge within the allowed degree.

    Attributes
    ----------
    residual : float
        Relative size of the last two increments when iteration stopped.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class SingularityError(DMEError, ArithmeticError):
    """A small linear system inside a flow was numerically singular."""


class StiffnessError(DMEError, RuntimeError):
    """The dense reference integrator could not meet its tolerance."""


class IngestionError(DMEError, ValueError):
    """A Matrix Market file could not be read or is inconsistent.

    Attributes
    ----------
    path : str or None
    line : int or None
        1-based line number of the offending entry, when known.
    """

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
