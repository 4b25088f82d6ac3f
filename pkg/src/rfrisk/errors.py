"""Exception hierarchy shared by all modules."""


class RfRiskError(Exception):
    """Base class for library errors."""


class InvalidArgumentError(RfRiskError, ValueError):
    """An argument is outside the documented domain."""


class ConfigError(InvalidArgumentError):
    """A CLI configuration document is malformed."""


class DivergentSumError(RfRiskError, ValueError):
    """A requested mode sum does not converge (tail exponent too small)."""


class NumericalError(RfRiskError, ArithmeticError):
    """A numerical procedure could not produce a certified answer."""


class NoSolutionError(NumericalError):
    """The implicit equations have no admissible solution for these inputs."""


class ThresholdSingularityError(NumericalError):
    """Evaluation sits on the interpolation threshold where the risk diverges."""


class ConvergenceError(NumericalError):
    """Bracketing or bisection failed to reach the requested tolerance."""


class SingularMatrixError(NumericalError):
    """A kernel matrix stayed singular after ridge stabilization."""
