"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class BridgeGPError(Exception):
    """Base class for all package errors."""


class DimensionError(BridgeGPError, ValueError):
    """Array shapes do not agree."""


class DomainError(BridgeGPError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(BridgeGPError, ValueError):
    """A run configuration is inconsistent (e.g. more basis terms than rows)."""


class DataError(BridgeGPError, ValueError):
    """Input data could not be parsed or failed validation."""


class NumericError(BridgeGPError, ArithmeticError):
    """A numerical routine failed (factorization, non-finite values)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class RankDeficiencyError(NumericError):
    """The generalized least-squares normal matrix is singular."""

    def __init__(self, message, columns=(), diagnostics=None):
        super().__init__(message, diagnostics)
        self.columns = tuple(columns)


class ChainAbort(NumericError):
    """An MCMC chain hit an unrecoverable failure."""

    def __init__(self, message, iteration, last_state=None, diagnostics=None):
        super().__init__(message, diagnostics)
        self.iteration = iteration
        self.last_state = last_state
