"""Exception hierarchy shared by every sardrn module."""


class SardrnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SardrnError, ValueError):
    """Array dimensions do not satisfy an operation's contract."""


class DomainError(SardrnError, ValueError):
    """A parameter lies outside its mathematical domain."""


class NumericError(SardrnError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class DegenerateRegionError(SardrnError, ValueError):
    """A statistic is unbounded because its input is constant or empty."""


class SpecError(SardrnError, ValueError):
    """A network topology violates a structural invariant."""


class ConfigurationError(SardrnError, ValueError):
    """Training or experiment settings are inconsistent."""


class ParseError(SardrnError, ValueError):
    """An input file is malformed.

    ``offset`` is the byte position where parsing stopped, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class ModelFormatError(ParseError):
    """Base class for model-file decoding failures."""


class ChecksumError(ModelFormatError):
    pass


class VersionError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


class ModelShapeError(ModelFormatError):
    pass
