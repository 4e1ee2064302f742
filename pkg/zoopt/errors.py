class ZooptError(Exception):
    """Base class for every error raised by the library."""


class DomainError(ZooptError, ValueError):
    """Input outside the mathematical domain of an operation (shape, sample id, zero matrix, NaN)."""


class ConfigurationError(ZooptError, ValueError):
    """Invalid or inconsistent configuration (tau <= 0, missing delta_0, run cap exceeded)."""


class UnsupportedProblemError(ZooptError):
    """The problem does not expose what a diagnostic needs (exact gradients, matrix shape)."""


class InsufficientDataError(ZooptError):
    """Not enough trace groups or seeds to fit a slope."""


class RunFailure(ZooptError):
    """
    A step of an optimizer run failed.

    Attributes:
        iteration (int): 1-based index of the failing iteration
        cause (BaseException): the underlying error
    """

    def __init__(self, iteration: int, cause: BaseException) -> None:
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"iteration {iteration}: {type(cause).__name__}: {cause}")

    def __reduce__(self) -> tuple[type, tuple[int, BaseException]]:
        # crosses process boundaries in the worker pool
        return (RunFailure, (self.iteration, self.cause))
