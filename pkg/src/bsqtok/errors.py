"""Exception hierarchy shared by every module in the package."""


class BsqError(Exception):
    """Base class for all package errors."""


class ZeroNorm(BsqError, ValueError):
    pass


class Unsupported(BsqError, ValueError):
    pass


class OutOfRange(BsqError, ValueError):
    pass


class EmptyCodebook(BsqError, ValueError):
    pass


class TooLarge(BsqError, ValueError):
    pass


class EmptyBatch(BsqError, ValueError):
    pass


class BadGroupSize(BsqError, ValueError):
    pass


class NonFinite(BsqError, ArithmeticError):
    pass


class ShapeMismatch(BsqError, ValueError):
    pass


class Diverged(BsqError, ArithmeticError):
    """Training loss became non-finite; usually the learning rate is too high."""


class UnknownKind(BsqError, ValueError):
    pass


class UncodableSymbol(BsqError, ValueError):
    pass


class CorruptStream(BsqError, ValueError):
    pass


class BadMagic(BsqError, ValueError):
    pass


class VersionMismatch(BsqError, ValueError):
    pass


class GeometryMismatch(BsqError, ValueError):
    pass


class BadDimensions(BsqError, ValueError):
    pass


class BadCheckpoint(BsqError, ValueError):
    pass
