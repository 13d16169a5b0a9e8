"""Exceptions raised by factorlens."""


class FactorLensError(Exception):
    """Base class of all factorlens errors."""


class InputError(FactorLensError):
    """Malformed input data (non-finite entries, asymmetric matrix, bad prices, unreadable file)."""


class ParameterError(InputError):
    """Hyperparameter, window, grid or configuration value out of range."""


class DegenerateInputError(InputError):
    """Input for which a solver subproblem is not defined."""


class ConvergenceError(FactorLensError):
    """Iterative solver did not reach its tolerance.

    Args:
        message (str): error message
        best: best iterate found before giving up
        diagnostics (dict): solver state at failure (iterations, residuals, ...)
    """

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}


class OracleError(ConvergenceError):
    """Reference solver failed, the check using it is inconclusive."""


class SelectionError(FactorLensError):
    """No candidate of a parameter grid produced a usable estimate."""
