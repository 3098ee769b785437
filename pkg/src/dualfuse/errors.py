"""Exception types raised across the package."""


class DualFuseError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(DualFuseError, ValueError):
    pass


class DivergenceError(DualFuseError):
    """The filter produced an update that cannot be applied (e.g. |dq_v| > 1)."""

    def __init__(self, message, epoch=None, t=None):
        super().__init__(message)
        self.epoch = epoch
        self.t = t


class InitializationError(DualFuseError):
    pass


class MissingDataError(DualFuseError):
    pass


class ParseError(DualFuseError, ValueError):
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
