"""Exception types shared across the package."""


class DsnError(Exception):
    """Base class for all package errors."""


class ShapeError(DsnError, ValueError):
    """Tensor or image dimensions violate an operation's contract."""


class DataError(DsnError, ValueError):
    """Unusable input data (empty directory, unreadable file, ...)."""


class FormatError(DataError):
    """Malformed serialized file: bad magic, header, or payload."""


class ChecksumError(FormatError):
    """Stored checksum does not match the file contents."""


class VersionError(FormatError):
    """Serialized format version is not supported by this build."""


class ConfigMismatchError(DataError):
    """Checkpoint configuration differs from the requested configuration."""


class HashMismatchError(DataError):
    """Bundle was produced by a different model than the one supplied."""


class NumericError(DsnError, RuntimeError):
    """Non-finite values appeared where finite ones are required."""
