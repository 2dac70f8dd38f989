"""Exception types raised across the package."""


class ProsodyError(Exception):
    """Base class for all package errors."""


# phrase parsing
class MissingAlignment(ProsodyError):
    pass


class OverlapError(ProsodyError):
    pass


# F0 features
class AllUnvoiced(ProsodyError):
    pass


class EmptyCorpus(ProsodyError):
    pass


class SingularSystem(ProsodyError):
    pass


class LengthMismatch(ProsodyError):
    pass


# networks
class ShapeMismatch(ProsodyError, ValueError):
    pass


class NonFiniteLoss(ProsodyError):
    pass


class RangeOutOfBounds(ProsodyError):
    pass


class DurationMismatch(ProsodyError):
    pass


# codebooks
class TooFewPoints(ProsodyError):
    pass


class DimMismatch(ProsodyError):
    pass


class WrongModelKind(ProsodyError):
    pass


# synthesis
class PhraseCountMismatch(ProsodyError):
    pass


class UnknownPhone(ProsodyError):
    pass


class UnknownCode(ProsodyError):
    pass


# statistics
class InvalidCounts(ProsodyError, ValueError):
    pass


class InvalidP(ProsodyError, ValueError):
    pass


# corpus / configuration
class FileMissing(ProsodyError):
    pass


class FormatError(ProsodyError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class AlignmentGap(ProsodyError):
    pass


class InvalidParams(ProsodyError, ValueError):
    pass


class ConfigError(ProsodyError, ValueError):
    pass
