"""Exception hierarchy shared by every hycass module.

User-facing failures (bad files, incompatible shapes, wrong model) derive from
:class:`HycassError`; the command line maps them to exit code 1.
"""


class HycassError(Exception):
    """Base class for all recoverable hycass errors."""


class FormatError(HycassError, ValueError):
    """A binary container could not be parsed."""


class MalformedMagicError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class DimensionOverflowError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class CorruptHeaderError(FormatError):
    """Header fields are individually valid but mutually inconsistent."""


class HashMismatchError(HycassError, ValueError):
    """Content digest does not match the expected model or payload."""


class ShapeError(HycassError, ValueError):
    """Operand shapes are incompatible (channel, band or dims mismatch)."""


class DivisibilityError(ShapeError):
    """Spatial dims cannot be windowed or downsampled as configured."""


class ConfigMismatchError(ShapeError):
    """Data or stream does not fit the model configuration."""


class DegenerateRangeError(HycassError, ValueError):
    """Min-max normalization requested on a constant cube."""


class InsufficientRankError(HycassError, ValueError):
    pass


class NonFiniteError(HycassError, FloatingPointError):
    """A loss or gradient became NaN or infinite."""


class EmptyDatasetError(HycassError, ValueError):
    pass
