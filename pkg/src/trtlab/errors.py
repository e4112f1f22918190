"""Exception hierarchy shared by all modules."""


class TRTError(Exception):
    """Base class for library errors."""


class DomainError(TRTError, ValueError):
    """A point lies outside the region where the metric is defined."""


class ParameterError(TRTError, ValueError):
    """An argument violates an operation's precondition."""


class SingularMetricError(TRTError, ArithmeticError):
    """The metric is not positive definite at an evaluation point."""

    def __init__(self, message, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues


class DivergenceError(TRTError, RuntimeError):
    """A geodesic failed to leave the outer ball within the step budget."""


class RankError(TRTError, ArithmeticError):
    """A vector set could not be completed to the required rank."""


class ConditioningError(TRTError, ArithmeticError):
    """A linear system is too ill-conditioned to solve reliably."""


class ConstructionError(TRTError, RuntimeError):
    """A spanning-set construction could not satisfy its constraints."""


class ConfigError(TRTError, ValueError):
    """Invalid experiment configuration; carries one message per problem."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
