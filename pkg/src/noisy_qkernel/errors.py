"""Exception hierarchy shared by all modules.

The CLI maps each family to an exit code, so new errors should subclass one
of :class:`ConfigError`, :class:`DataError` or :class:`NumericalError`.
"""


class NoisyKernelError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(NoisyKernelError, ValueError):
    """Invalid parameters or configuration."""


class DimensionError(ConfigError):
    """Array or vector shapes do not agree."""


class DataError(NoisyKernelError):
    """Input data could not be parsed or is unusable."""


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class CountMismatchError(DataError):
    pass


class RankError(DataError):
    """Training matrix has too few independent directions for the PCA."""


class NumericalError(NoisyKernelError, ArithmeticError):
    """A numerical routine failed or produced out-of-range values."""


class SingularSystemError(NumericalError):
    def __init__(self, min_eigenvalue: float, message: str | None = None):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            message
            or f"regularized kernel system is numerically singular "
            f"(minimum eigenvalue {self.min_eigenvalue:.3e}); "
            "too few measurement shots for this lambda?"
        )
