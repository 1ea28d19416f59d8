"""Exception types raised across the package.

Everything derives from :class:`CMDError` so callers (and the CLI) can tell
data/crypto failures apart from programming errors.
"""


class CMDError(Exception):
    """Base class for all data, crypto and storage errors."""


# associative arrays
class MixedTypeCollision(CMDError, TypeError):
    pass


class TypeMismatch(CMDError, TypeError):
    pass


class InvalidRange(CMDError, ValueError):
    pass


# D4M schema
class RaggedRow(CMDError, ValueError):
    pass


class DuplicateRowId(CMDError, ValueError):
    pass


class DelimiterClash(CMDError, ValueError):
    pass


class MalformedColumn(CMDError, ValueError):
    pass


class MultiValueCell(CMDError, ValueError):
    pass


# crypto
class EmptyPassword(CMDError, ValueError):
    pass


class DecryptFailure(CMDError):
    pass


class AuthFailure(DecryptFailure):
    pass


class InputTooLong(CMDError, ValueError):
    pass


class PolicyMismatch(CMDError, ValueError):
    pass


class SchemeMismatch(CMDError, ValueError):
    pass


# analytics
class SequenceTooShort(CMDError, ValueError):
    pass


class EmptyProjection(CMDError, ValueError):
    pass


# store
class NotFound(CMDError, FileNotFoundError):
    pass


class Corrupt(CMDError):
    """A table file failed validation.

    ``recovered`` is the number of intact records preceding the damage and
    ``valid_length`` the byte offset where they end.
    """

    def __init__(self, message, recovered=0, valid_length=0):
        super().__init__(message)
        self.recovered = recovered
        self.valid_length = valid_length


class IoFailure(CMDError, OSError):
    pass


class TableLocked(CMDError):
    pass


# benchmarks
class CorrectnessFailure(CMDError, AssertionError):
    pass
