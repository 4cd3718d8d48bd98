"""Exception types raised across the package."""


class PwrAlignError(Exception):
    """Base class for all package errors."""


class DegenerateInput(PwrAlignError):
    pass


class EmptyInput(PwrAlignError):
    pass


class DisconnectedGraph(PwrAlignError):
    pass


class EmptyPart(PwrAlignError):
    pass


class NoCorrespondences(PwrAlignError):
    pass


class InsufficientCorrespondences(PwrAlignError):
    pass


class NoConsensus(PwrAlignError):
    pass


class NoPairs(PwrAlignError):
    pass


class DensityViolation(PwrAlignError):
    pass


class InvalidSpec(PwrAlignError):
    pass


class EmptyResult(PwrAlignError):
    pass


class ParseError(PwrAlignError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFormat(PwrAlignError):
    pass


class ConfigError(PwrAlignError):
    pass


class PartSetMismatch(PwrAlignError):
    pass
