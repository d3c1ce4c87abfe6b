"""Exception types raised across the package.

Everything derives from :class:`PreformerError` so callers (notably the CLI)
can catch one base class and map it to a diagnostic exit.
"""


class PreformerError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(PreformerError):
    """Operands have incompatible shapes."""


class NotScalar(PreformerError):
    """Backward was requested from a tensor with more than one element."""


class InvalidKernel(PreformerError):
    """Moving-average kernel is even, nonpositive, or too large for the series."""


class OddInputLength(PreformerError):
    """Decoder-input construction needs an even history length."""


class TooFewSegments(PreformerError):
    """Predictive aggregation needs at least two key/value segments."""


class InvalidConfig(PreformerError):
    """An attention or model configuration is internally inconsistent."""


class ConfigMismatch(PreformerError):
    """A checkpoint or run configuration does not match the data it is applied to."""


class MissingGrad(PreformerError):
    """An optimizer step found a trainable parameter without a gradient."""


class EmptyDataset(PreformerError):
    """A training/evaluation routine received no samples."""


class ParseError(PreformerError):
    """A CSV or checkpoint field could not be parsed."""


class GapError(PreformerError):
    """Timestamps are not strictly increasing at a constant interval."""


class EmptyFile(PreformerError):
    """Input file contains no data rows."""


class TooShort(PreformerError):
    """A series or split is too short for the requested windowing."""


class UnknownKind(PreformerError):
    """Unrecognized synthetic-series generator name."""
