"""Exception types shared across the package."""


class NsdehazeError(Exception):
    """Base class for all package errors."""


class NotFoundError(NsdehazeError, FileNotFoundError):
    """A required file (image, checkpoint, weights) does not exist."""


class FormatError(NsdehazeError, ValueError):
    """A file exists but cannot be decoded as the expected format."""


class IoError(NsdehazeError, OSError):
    """A write target is unusable."""


class ArgumentError(NsdehazeError, ValueError):
    """An argument violates a documented precondition."""


class ShapeError(NsdehazeError, ValueError):
    """Array shapes are inconsistent or violate a size constraint."""


class NumericalError(NsdehazeError, ArithmeticError):
    """A computation produced non-finite values."""
