"""Exception types raised across the package."""


class GSGDError(Exception):
    """Base class for all errors raised by this package."""


class NumericalError(GSGDError):
    """A numerical precondition failed (CLI exit code 2)."""


class ConfigError(GSGDError, ValueError):
    """Bad user-supplied parameter or configuration (CLI exit code 1)."""


class NotSymmetric(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class RankCollapse(NotPositiveDefinite):
    """A Gram preconditioner became singular during a solver run."""


class NonConvergedAlignment(NumericalError):
    pass


class DisconnectedAfterRetries(NumericalError):
    pass


class ZeroMatrix(NumericalError):
    pass


class RankOutOfRange(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass


class BadParameter(ConfigError):
    pass


class BadK(BadParameter):
    pass


class BadRadius(BadParameter):
    pass


class GraphTooDense(ConfigError):
    pass


class EmptyComplement(ConfigError):
    pass


class MissingGraph(ConfigError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class EmptyDataset(ConfigError):
    pass
